use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Report;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Report>,
    pub dev: Vec<Report>,
    pub test: Vec<Report>,
}

impl CorpusSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }

    pub fn part(&self, which: SplitName) -> &[Report] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

/// How a corpus file is divided into train/dev/test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitSpec {
    Random { ratios: [f64; 3], seed: u64 },
    Holdout { body_part: String, dev_fraction: f64, seed: u64 },
}

impl SplitSpec {
    pub fn apply(&self, reports: &[Report]) -> Result<CorpusSplit> {
        match self {
            SplitSpec::Random { ratios, seed } => {
                split_corpus(reports, (ratios[0], ratios[1], ratios[2]), *seed)
            }
            SplitSpec::Holdout {
                body_part,
                dev_fraction,
                seed,
            } => holdout_body_part(reports, body_part, *dev_fraction, *seed),
        }
    }
}

/// Largest-remainder apportionment of `n` items: every share is within one
/// item of its exact proportion and the shares sum to `n`. Remainder ties go
/// to the earlier share.
pub fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

fn shuffled(reports: &[Report], seed: u64) -> Vec<Report> {
    let mut out = reports.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.shuffle(&mut rng);
    out
}

/// Seeded random train/dev/test partition.
pub fn split_corpus(
    reports: &[Report],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<CorpusSplit> {
    if reports.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|x| !(0.0..=1.0).contains(x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios(format!(
            "{r:?} must be fractions summing to 1"
        )));
    }
    let sizes = apportion(reports.len(), &r);
    let mut all = shuffled(reports, seed);
    let test = all.split_off(sizes[0] + sizes[1]);
    let dev = all.split_off(sizes[0]);
    Ok(CorpusSplit {
        train: all,
        dev,
        test,
    })
}

/// Reserves every report of `part` as test data and splits the remainder
/// into train and dev.
pub fn holdout_body_part(
    reports: &[Report],
    part: &str,
    dev_fraction: f64,
    seed: u64,
) -> Result<CorpusSplit> {
    if !(0.0..=1.0).contains(&dev_fraction) {
        return Err(Error::InvalidRatios(format!(
            "dev fraction {dev_fraction} outside [0, 1]"
        )));
    }
    let (test, rest): (Vec<Report>, Vec<Report>) =
        reports.iter().cloned().partition(|r| r.body_part == part);
    if test.is_empty() {
        return Err(Error::UnknownBodyPart(part.to_string()));
    }
    let sizes = apportion(rest.len(), &[1.0 - dev_fraction, dev_fraction]);
    let mut train = shuffled(&rest, seed);
    let dev = train.split_off(sizes[0]);
    Ok(CorpusSplit { train, dev, test })
}
