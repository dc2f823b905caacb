//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use bgsum::autodiff::{Graph, ParamSet, Tensor, Var};
use bgsum::attention::prepare_keys;
use bgsum::corpus::{Report, Vocabulary};
use bgsum::decoder::{step_background, step_plain, DecoderDims, DecoderParams, ExtendedVocab, SourceContext};
use bgsum::model::{Example, ModelConfig, Summarizer, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Central difference of `f` at `x` along every coordinate.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + FD_STEP;
            let up = f(&p);
            p[i] = x[i] - FD_STEP;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}

/// Every parameter scalar of `model` checked against central differences of
/// the teacher-forced loss on `ex`. Returns the worst relative error.
pub fn model_grad_error(model: &mut Summarizer, ex: &Example) -> f64 {
    let grads = {
        let mut g = Graph::with_params(&model.params);
        let loss = model.loss(&mut g, ex).unwrap();
        g.backward(loss).unwrap()
    };
    let ids: Vec<_> = model.params.ids().collect();
    let mut worst = 0.0f64;
    for id in ids {
        let n = model.params.get(id).numel();
        let analytic = grads.param(id).unwrap_or_else(|| vec![0.0; n]);
        for k in 0..n {
            let orig = model.params.get(id).data()[k];
            model.params.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let up = model.eval_loss(ex).unwrap();
            model.params.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let down = model.eval_loss(ex).unwrap();
            model.params.get_mut(id).data_mut()[k] = orig;
            worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Redraws every parameter uniformly from ±`bound`.
pub fn randomize(params: &mut ParamSet, bound: f64, rng: &mut impl Rng) {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let shape = params.get(id).shape().to_vec();
        params.set(id, Tensor::uniform(&shape, bound, rng)).unwrap();
    }
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub fn report(id: &str, background: &str, findings: &str, impression: &str) -> Report {
    Report {
        id: id.into(),
        body_part: "ankle".into(),
        background: words(background),
        findings: words(findings),
        impression: words(impression),
    }
}

/// Eight content tokens plus the four reserved ones.
pub fn tiny_vocab() -> Vocabulary {
    Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f", "g", "h"])
}

/// The tiny gradient-check configuration: hidden 6 per direction, two
/// layers, a bridge from 12 down to a decoder of 6.
pub fn tiny_config(variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        emb_dim: 4,
        hidden: 6,
        layers: 2,
        dec_hidden: 6,
        attn_dim: 5,
        proj_dim: 5,
        seed,
    }
}

/// Random report over the tiny vocabulary with sequences of at most five
/// tokens, an out-of-vocabulary source token and a two-token impression
/// (three decode steps with EOS).
pub fn tiny_report(rng: &mut ChaCha8Rng) -> Report {
    let pool = ["a", "b", "c", "d", "e", "f", "g", "h", "zz"];
    let mut seq = |lo: usize| -> String {
        let n = rng.gen_range(lo..=5);
        (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect::<Vec<_>>().join(" ")
    };
    let background = seq(1);
    let findings = format!("zz {}", seq(1).split(' ').take(4).collect::<Vec<_>>().join(" "));
    Report {
        id: "tiny".into(),
        body_part: "ankle".into(),
        background: words(&background),
        findings: words(&findings),
        impression: vec!["zz".into(), pool[rng.gen_range(0..8)].into()],
    }
}

pub fn tiny_model(variant: Variant, seed: u64) -> (Summarizer, Example) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Summarizer::new(tiny_config(variant, seed), tiny_vocab()).unwrap();
    randomize(&mut model.params, 0.5, &mut rng);
    let ex = model.example(&tiny_report(&mut rng)).unwrap();
    (model, ex)
}

/// Reference n-gram overlap by explicit multiset matching.
pub fn brute_rouge_n(c: &[String], r: &[String], n: usize) -> (f64, f64, f64) {
    let grams = |s: &[String]| -> Vec<Vec<String>> {
        if s.len() < n {
            Vec::new()
        } else {
            (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
        }
    };
    let cg = grams(c);
    let mut rg = grams(r);
    let mut overlap = 0usize;
    for g in &cg {
        if let Some(pos) = rg.iter().position(|x| x == g) {
            rg.remove(pos);
            overlap += 1;
        }
    }
    prf(overlap, cg.len(), grams(r).len())
}

/// LCS length by trying every subsequence of the shorter sequence.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16);
    let is_subseq = |sub: &[&String]| {
        let mut it = long.iter();
        sub.iter().all(|x| it.any(|y| y == *x))
    };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let ones = mask.count_ones() as usize;
        if ones <= best {
            continue;
        }
        let sub: Vec<&String> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| &short[i]).collect();
        if is_subseq(&sub) {
            best = ones;
        }
    }
    best
}

pub fn prf(overlap: usize, cand: usize, reference: usize) -> (f64, f64, f64) {
    let p = if cand == 0 { 0.0 } else { overlap as f64 / cand as f64 };
    let r = if reference == 0 { 0.0 } else { overlap as f64 / reference as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Stationary vector of `p = d/N + (1 - d) Bᵀ p` for a graph whose rows all
/// have neighbours: the null vector of `G - I` for the damped transition
/// matrix `G`, found through a dense SVD and scaled to sum one.
pub fn dense_centrality(similarity: &[Vec<f64>], damping: f64) -> Vec<f64> {
    use nalgebra::DMatrix;
    let n = similarity.len();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| similarity[i][j]).sum();
        for j in (0..n).filter(|&j| j != i) {
            b[(i, j)] = similarity[i][j] / s;
        }
    }
    let g = DMatrix::from_element(n, n, damping / n as f64) + b.transpose() * (1.0 - damping);
    let m = g - DMatrix::<f64>::identity(n, n);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v: Vec<f64> = v_t.row(k).iter().copied().collect();
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

/// Squared singular values: the eigenvalues of `mᵀm` (or `m mᵀ`, whichever
/// is smaller), non-increasing. Squares are compared because a square root
/// would blow rounding noise near zero up to about `1e-8`.
pub fn eig_squared_singular_values(m: &[Vec<f64>]) -> Vec<f64> {
    use nalgebra::DMatrix;
    let rows = m.len();
    let cols = m[0].len();
    let a = DMatrix::from_fn(rows, cols, |r, c| m[r][c]);
    let gram = if rows >= cols { a.transpose() * &a } else { &a * a.transpose() };
    let mut ev: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Hand-built step model whose next-token distribution is a fixed function
/// of the prefix.
pub struct TableModel {
    pub vocab: usize,
    pub seed: u64,
    pub end: usize,
}

impl TableModel {
    pub fn dist(&self, prefix: &[usize]) -> Vec<f64> {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for &t in prefix {
            h = (h ^ t as u64).wrapping_mul(0x0100_0000_01b3).rotate_left(17);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let w: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(0.05..1.0f64).powi(3)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    /// Best sequence by per-token log-probability among all sequences that
    /// end at the end token within `max_len` and all cut-off sequences of
    /// exactly `max_len`; ties go to the smaller token sequence.
    pub fn exhaustive(&self, max_len: usize) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut stack: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
        while let Some((prefix, lp)) = stack.pop() {
            let d = self.dist(&prefix);
            for (k, p) in d.iter().enumerate() {
                let mut seq = prefix.clone();
                seq.push(k);
                let l = lp + p.ln();
                let complete = k == self.end || seq.len() == max_len;
                if complete {
                    let score = l / seq.len() as f64;
                    let better = match &best {
                        None => true,
                        Some((bs, bscore)) => score > *bscore || (score == *bscore && seq < *bs),
                    };
                    if better {
                        best = Some((seq, score));
                    }
                } else {
                    stack.push((seq, l));
                }
            }
        }
        best.unwrap()
    }
}

impl bgsum::inference::StepModel for TableModel {
    type State = Vec<usize>;

    fn initial(&self) -> bgsum::Result<Vec<usize>> {
        Ok(Vec::new())
    }

    fn step(&self, prefix: &Vec<usize>, prev: usize) -> bgsum::Result<(Vec<f64>, Vec<usize>)> {
        let mut next = prefix.clone();
        if prev != self.start_token() || !prefix.is_empty() {
            next.push(prev);
        }
        let d = self.dist(&next);
        Ok((d.iter().map(|p| p.ln()).collect(), next))
    }

    fn start_token(&self) -> usize {
        usize::MAX
    }

    fn end_token(&self) -> usize {
        self.end
    }
}

/// Worst relative error of the gradient of `build`'s scalar output with
/// respect to each tensor in `inputs`, against central differences.
pub fn leaf_grad_error(
    params: &ParamSet,
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Var,
) -> f64 {
    let run = |vals: &[Tensor], grads: bool| {
        let mut g = Graph::inference(params);
        let vars: Vec<Var> = vals
            .iter()
            .map(|t| g.leaf(&t.clone().with_requires_grad(grads)))
            .collect();
        let out = build(&mut g, &vars);
        let value = g.scalar(out);
        let grads = grads.then(|| {
            let gr = g.backward(out).unwrap();
            vars.iter()
                .zip(vals)
                .map(|(v, t)| gr.wrt(*v).unwrap_or_else(|| vec![0.0; t.numel()]))
                .collect::<Vec<_>>()
        });
        (value, grads)
    };
    let analytic = run(inputs, true).1.unwrap();
    let mut worst = 0.0f64;
    for (i, t) in inputs.iter().enumerate() {
        let numeric = numeric_grad(t.data(), |x| {
            let mut vals = inputs.to_vec();
            vals[i] = Tensor::new(t.shape().to_vec(), x.to_vec()).unwrap();
            run(&vals, false).0
        });
        worst = worst.max(max_rel_err(&analytic[i], &numeric));
    }
    worst
}

/// Reduces any node to a scalar through a fixed random linear functional so
/// that every output coordinate reaches the loss with a distinct weight.
pub fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(v).to_vec();
    let w = g.leaf(&Tensor::uniform(&shape, 1.0, &mut rng));
    let p = g.mul(v, w).unwrap();
    g.sum(p).unwrap()
}

pub const FIXTURE_CORPUS: &str = include_str!("../fixtures/corpus.jsonl");

/// The keep/drop ledger expected for [`FIXTURE_CORPUS`], written by hand.
pub fn fixture_ledger() -> Vec<bgsum::corpus::LedgerEntry> {
    use bgsum::corpus::{DropReason::*, Exclusion::*, LedgerEntry};
    let e = |line: usize, id: &str, excluded| LedgerEntry { line, id: Some(id.into()), excluded };
    vec![
        e(1, "keep-1", None),
        e(2, "short-findings", Some(Filtered(FindingsTooShort))),
        e(3, "short-impression", Some(Filtered(ImpressionTooShort))),
        e(4, "no-background", Some(MissingSection("background".into()))),
        e(5, "null-findings", Some(MissingSection("findings".into()))),
        e(6, "empty-impression", Some(MissingSection("impression".into()))),
        e(7, "dup-findings", Some(AmbiguousSections("findings".into()))),
        e(8, "two-findings", Some(AmbiguousSections("findings".into()))),
        e(9, "keep-2", None),
        e(11, "both-short", Some(Filtered(FindingsTooShort))),
        e(12, "keep-3", None),
    ]
}

pub struct Pair {
    pub gated_ps: ParamSet,
    pub gated: DecoderParams,
    pub plain_ps: ParamSet,
    pub plain: DecoderParams,
}

/// A gated decoder whose background columns are zero next to a plain decoder
/// holding the same remaining weights.
pub fn reduction_pair(seed: u64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = DecoderDims { emb_dim: 3, context_dim: 4, hidden: 5, attn_dim: 3, proj_dim: 4, vocab_size: 12 };
    let mut gated_ps = ParamSet::new();
    let gated = DecoderParams::new(&mut gated_ps, "dec", dims, true, &mut rng);
    randomize(&mut gated_ps, 0.5, &mut rng);
    let cols = gated_ps.get(gated.cell.kernel).cols();
    let bg = gated.background_columns();
    let kernel = gated_ps.get_mut(gated.cell.kernel).data_mut();
    for r in 0..kernel.len() / cols {
        for c in bg.clone() {
            kernel[r * cols + c] = 0.0;
        }
    }
    let mut plain_ps = ParamSet::new();
    let plain = DecoderParams::new(&mut plain_ps, "dec", dims, false, &mut rng);
    let ids: Vec<_> = plain_ps.ids().collect();
    for id in ids {
        let src = gated_ps.get(gated_ps.id(plain_ps.name(id)).unwrap());
        let t = if id == plain.cell.kernel {
            let keep = plain_ps.get(id).cols();
            let rows: Vec<Vec<f64>> = (0..src.rows()).map(|r| src.row(r)[..keep].to_vec()).collect();
            Tensor::matrix(&rows).unwrap()
        } else {
            src.clone()
        };
        plain_ps.set(id, t).unwrap();
    }
    Pair { gated_ps, gated, plain_ps, plain }
}

/// Two decode steps; returns every intermediate value.
pub fn decode(ps: &ParamSet, p: &DecoderParams, b: Option<&Tensor>, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = tiny_vocab();
    let ext = ExtendedVocab::new(&vocab, &words("a zz c"));
    let mut g = Graph::inference(ps);
    let states = g.leaf(&Tensor::uniform(&[3, 4], 1.0, &mut rng));
    let mut s = g.leaf(&Tensor::uniform(&[5], 1.0, &mut rng));
    let mut c = g.leaf(&Tensor::uniform(&[5], 1.0, &mut rng));
    let ys = [Tensor::uniform(&[3], 1.0, &mut rng), Tensor::uniform(&[3], 1.0, &mut rng)];
    let keys = prepare_keys(&mut g, states, &p.attn).unwrap();
    let src = SourceContext { keys, ext: &ext };
    let bv = b.map(|t| g.leaf(t));
    let mut out = Vec::new();
    for y in &ys {
        let y = g.leaf(y);
        let st = match bv {
            Some(b) => step_background(&mut g, s, c, y, b, &src, p).unwrap(),
            None => step_plain(&mut g, s, c, y, &src, p).unwrap(),
        };
        for v in [st.s, st.c, st.attn, st.context, st.p_gen, st.p_vocab, st.dist] {
            out.push(g.value(v).to_vec());
        }
        (s, c) = (st.s, st.c);
    }
    out
}


/// Symmetric similarity matrix with every row holding a neighbour.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        s[i][i] = 1.0;
        for j in i + 1..n {
            let v = if rng.gen_bool(0.6) { rng.gen_range(0.1..1.0) } else { 0.0 };
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    for i in 0..n {
        if (0..n).all(|j| j == i || s[i][j] == 0.0) {
            let j = (i + 1) % n;
            s[i][j] = 0.5;
            s[j][i] = 0.5;
        }
    }
    s
}
