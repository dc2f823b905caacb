//! Extractive baselines over the findings: LexRank centrality and
//! SVD-based concept selection, each returning whole input sentences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_SELECT: usize = 3;
pub const LEXRANK_DAMPING: f64 = 0.15;
pub const LEXRANK_THRESHOLD: f64 = 0.1;
pub const POWER_TOLERANCE: f64 = 1e-8;
const POWER_MAX_ITERS: usize = 100_000;

/// Splits a token stream after every `.`, `?` or `!` token. Trailing tokens
/// without a terminator form a final sentence.
pub fn split_sentences(tokens: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for t in tokens {
        cur.push(t.clone());
        if matches!(t.as_str(), "." | "?" | "!") {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_term(t: &str) -> bool {
    t.chars().any(char::is_alphanumeric)
}

// Scores closer than this compare equal so that symmetric inputs tie exactly.
fn quantize(x: f64) -> i64 {
    (x * 1e10).round() as i64
}

/// Indices of the `n` highest scores (earlier index first on ties), in
/// document order.
fn top_n(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by_key(|&i| (std::cmp::Reverse(quantize(scores[i])), i));
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

/// Cosine similarities of idf-weighted term-frequency sentence vectors.
/// Similarities below the threshold are dropped; the diagonal is kept at 1
/// for reference but ignored by [`centrality`].
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceGraph {
    pub sentences: Vec<Vec<String>>,
    pub similarity: Vec<Vec<f64>>,
    pub threshold: f64,
}

impl SentenceGraph {
    /// idf is `1 + ln(N / df)` over the sentences of this one input.
    pub fn new(sentences: &[Vec<String>], threshold: f64) -> Self {
        let n = sentences.len();
        let tfs: Vec<BTreeMap<&str, f64>> = sentences
            .iter()
            .map(|s| {
                let mut tf = BTreeMap::new();
                for t in s.iter().filter(|t| is_term(t)) {
                    *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
                }
                tf
            })
            .collect();
        let mut df: BTreeMap<&str, f64> = BTreeMap::new();
        for tf in &tfs {
            for t in tf.keys() {
                *df.entry(t).or_insert(0.0) += 1.0;
            }
        }
        let vecs: Vec<BTreeMap<&str, f64>> = tfs
            .iter()
            .map(|tf| {
                tf.iter()
                    .map(|(t, c)| (*t, c * (1.0 + (n as f64 / df[t]).ln())))
                    .collect()
            })
            .collect();
        let norms: Vec<f64> = vecs
            .iter()
            .map(|v| v.values().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let mut similarity = vec![vec![0.0; n]; n];
        for i in 0..n {
            similarity[i][i] = 1.0;
            for j in i + 1..n {
                if norms[i] == 0.0 || norms[j] == 0.0 {
                    continue;
                }
                let dot: f64 = vecs[i]
                    .iter()
                    .filter_map(|(t, x)| vecs[j].get(t).map(|y| x * y))
                    .sum();
                let cos = dot / (norms[i] * norms[j]);
                let s = if cos >= threshold { cos } else { 0.0 };
                similarity[i][j] = s;
                similarity[j][i] = s;
            }
        }
        Self {
            sentences: sentences.to_vec(),
            similarity,
            threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Centrality {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// L1 distance between the last two iterates.
    pub delta: f64,
}

/// Damped power iteration `p <- d/N + (1 - d) Bᵀ p` from the uniform vector,
/// where `B` is the off-diagonal similarity matrix with rows scaled to sum
/// to one. A sentence with no neighbours keeps a zero row, so its mass is
/// not redistributed and it scores the damping floor `d/N` when nothing
/// points to it.
pub fn centrality(similarity: &[Vec<f64>], damping: f64, tol: f64) -> Centrality {
    let n = similarity.len();
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| similarity[i][j]).sum();
        if row_sum > 0.0 {
            for j in (0..n).filter(|&j| j != i) {
                b[i][j] = similarity[i][j] / row_sum;
            }
        }
    }
    let floor = damping / n as f64;
    let mut p = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    while delta >= tol && iterations < POWER_MAX_ITERS {
        let next: Vec<f64> = (0..n)
            .map(|j| floor + (1.0 - damping) * (0..n).map(|i| b[i][j] * p[i]).sum::<f64>())
            .collect();
        delta = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        iterations += 1;
    }
    Centrality {
        scores: p,
        iterations,
        delta,
    }
}

pub fn lexrank_scores(sentences: &[Vec<String>]) -> Result<Centrality> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput);
    }
    let graph = SentenceGraph::new(sentences, LEXRANK_THRESHOLD);
    Ok(centrality(&graph.similarity, LEXRANK_DAMPING, POWER_TOLERANCE))
}

/// Indices of the `n` most central sentences in document order.
pub fn lexrank_select(sentences: &[Vec<String>], n: usize) -> Result<Vec<usize>> {
    Ok(top_n(&lexrank_scores(sentences)?.scores, n))
}

pub fn lexrank(sentences: &[Vec<String>], n: usize) -> Result<Vec<Vec<String>>> {
    let idx = lexrank_select(sentences, n)?;
    Ok(idx.into_iter().map(|i| sentences[i].clone()).collect())
}

/// Thin SVD `m = U diag(sigma) Vᵀ` with `k = min(rows, cols)` singular
/// values in non-increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct Svd {
    /// `[rows x k]`, orthonormal columns.
    pub u: Tensor,
    pub sigma: Vec<f64>,
    /// `[cols x k]`, orthonormal columns.
    pub v: Tensor,
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|c| (0..rows).map(|r| m[r][c]).collect()).collect()
}

// Columns stored as vectors: `a[j]` is column j.
fn jacobi_columns(mut a: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let c = a.len();
    let mut v: Vec<Vec<f64>> = (0..c)
        .map(|j| (0..c).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for cols in [&mut a, &mut v] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, xq) = (*x, *y);
                        *x = cs * xp - sn * xq;
                        *y = sn * xp + cs * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (a, v)
}

// Extends `cols` (orthonormal, length `dim`) with unit vectors orthogonal to
// all of them, at positions where `cols[j]` is `None`.
fn complete_basis(cols: &mut [Option<Vec<f64>>], dim: usize) {
    let mut candidate = 0;
    for j in 0..cols.len() {
        if cols[j].is_some() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let d: f64 = c.iter().zip(&e).map(|(x, y)| x * y).sum();
                    e.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= norm);
                cols[j] = Some(e);
                break;
            }
        }
    }
}

fn to_tensor(cols: &[Vec<f64>], rows: usize) -> Tensor {
    let k = cols.len();
    Tensor::from_fn(&[rows, k], |i| cols[i % k][i / k])
}

/// One-sided Jacobi SVD.
pub fn svd(m: &Tensor) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::Tensor(crate::autodiff::TensorError::NonFinite("svd")));
    }
    let (rows, cols) = (m.rows(), m.cols());
    let dense: Vec<Vec<f64>> = (0..rows).map(|r| m.row(r).to_vec()).collect();
    if rows < cols {
        let t = Tensor::matrix(&transpose(&dense))?;
        let s = svd(&t)?;
        return Ok(Svd {
            u: s.v,
            sigma: s.sigma,
            v: s.u,
        });
    }
    let (a, v) = jacobi_columns(transpose(&dense));
    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let scale = norms.iter().copied().fold(0.0, f64::max);
    let tiny = scale * 1e-13;
    let mut u_cols: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| (norms[j] > tiny).then(|| a[j].iter().map(|x| x / norms[j]).collect()))
        .collect();
    complete_basis(&mut u_cols, rows);
    let u_cols: Vec<Vec<f64>> = u_cols.into_iter().map(|c| c.expect("basis completed")).collect();
    let sigma = order.iter().map(|&j| if norms[j] > tiny { norms[j] } else { 0.0 }).collect();
    // v[j] is column j of V (rotations were applied to columns).
    let v_cols: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();
    Ok(Svd {
        u: to_tensor(&u_cols, rows),
        sigma,
        v: to_tensor(&v_cols, cols),
    })
}

/// Raw term counts, terms sorted, one column per sentence.
pub fn term_sentence_matrix(sentences: &[Vec<String>]) -> (Vec<String>, Tensor) {
    let terms: BTreeSet<&str> = sentences
        .iter()
        .flatten()
        .map(String::as_str)
        .filter(|t| is_term(t))
        .collect();
    let terms: Vec<String> = terms.into_iter().map(String::from).collect();
    let index: BTreeMap<&str, usize> = terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let cols = sentences.len();
    let mut m = Tensor::zeros(&[terms.len(), cols]);
    for (j, s) in sentences.iter().enumerate() {
        for t in s {
            if let Some(&i) = index.get(t.as_str()) {
                m.data_mut()[i * cols + j] += 1.0;
            }
        }
    }
    (terms, m)
}

/// For each concept in order of singular value, the not yet chosen sentence
/// with the largest absolute weight in it; once concepts run out the
/// remaining slots are filled in document order.
pub fn lsa_select(sentences: &[Vec<String>], n: usize) -> Result<Vec<usize>> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput);
    }
    let count = sentences.len();
    let n = n.min(count);
    let (terms, m) = term_sentence_matrix(sentences);
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    if !terms.is_empty() {
        let s = svd(&m)?;
        let top = s.sigma.first().copied().unwrap_or(0.0);
        for (k, &sig) in s.sigma.iter().enumerate() {
            if chosen.len() == n || sig <= top * 1e-10 {
                break;
            }
            let best = (0..count)
                .filter(|j| !chosen.contains(j))
                .max_by_key(|&j| (quantize(s.v.get(j, k).abs()), std::cmp::Reverse(j)));
            if let Some(j) = best {
                chosen.push(j);
            }
        }
    }
    for j in 0..count {
        if chosen.len() == n {
            break;
        }
        if !chosen.contains(&j) {
            chosen.push(j);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

pub fn lsa_summarize(sentences: &[Vec<String>], n: usize) -> Result<Vec<Vec<String>>> {
    let idx = lsa_select(sentences, n)?;
    Ok(idx.into_iter().map(|i| sentences[i].clone()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMethod {
    LexRank,
    Lsa,
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lexrank" => Ok(Self::LexRank),
            "lsa" => Ok(Self::Lsa),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LexRank => "lexrank",
            Self::Lsa => "lsa",
        })
    }
}

/// Splits `findings` into sentences and returns the selected ones joined
/// back into one token sequence.
pub fn extract(method: BaselineMethod, findings: &[String], n: usize) -> Result<Vec<String>> {
    let sentences = split_sentences(findings);
    let picked = match method {
        BaselineMethod::LexRank => lexrank(&sentences, n)?,
        BaselineMethod::Lsa => lsa_summarize(&sentences, n)?,
    };
    Ok(picked.concat())
}
