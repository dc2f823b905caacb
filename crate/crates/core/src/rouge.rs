//! ROUGE-N and ROUGE-L on token sequences, and corpus-level aggregation with
//! bootstrap confidence intervals.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const DEFAULT_BOOTSTRAP_SEED: u64 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    /// Score from an overlap count and the two sequence sizes; empty sides
    /// give zero.
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        let ratio = |n: usize| if n == 0 { 0.0 } else { overlap as f64 / n as f64 };
        let precision = ratio(candidate);
        let recall = ratio(reference);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap. `n = 0` scores zero.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(
        overlap,
        cand.values().sum(),
        refs.values().sum(),
    )
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Mean F1 and its 95% bootstrap interval, in percentage points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_f1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// The evaluation report written by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge1: Aggregate,
    pub rouge2: Aggregate,
    #[serde(rename = "rougeL")]
    pub rouge_l: Aggregate,
}

/// Percentile bootstrap of the mean of `values`: `resamples` draws with
/// replacement, interval bounds at the 2.5th and 97.5th nearest-rank
/// percentiles of the resampled means.
pub fn bootstrap_mean(values: &[f64], resamples: usize, rng: &mut impl Rng) -> Aggregate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let pick = |q: f64| means[((q * resamples as f64).ceil() as usize).clamp(1, resamples) - 1];
    Aggregate {
        mean_f1: 100.0 * mean,
        ci_low: 100.0 * pick(0.025),
        ci_high: 100.0 * pick(0.975),
    }
}

/// Per-pair F1 of ROUGE-1, ROUGE-2 and ROUGE-L averaged over `pairs` of
/// (candidate, reference), with seeded bootstrap intervals.
pub fn corpus_rouge<T: AsRef<str>>(pairs: &[(Vec<T>, Vec<T>)], seed: u64) -> Result<RougeReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut r1 = Vec::with_capacity(pairs.len());
    let mut r2 = Vec::with_capacity(pairs.len());
    let mut rl = Vec::with_capacity(pairs.len());
    for (c, r) in pairs {
        r1.push(rouge_n(c, r, 1).f1);
        r2.push(rouge_n(c, r, 2).f1);
        rl.push(rouge_l(c, r).f1);
    }
    // One generator per metric so each interval is reproducible on its own.
    let agg = |v: &[f64], k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        bootstrap_mean(v, BOOTSTRAP_RESAMPLES, &mut rng)
    };
    Ok(RougeReport {
        rouge1: agg(&r1, 1),
        rouge2: agg(&r2, 2),
        rouge_l: agg(&rl, 3),
    })
}
