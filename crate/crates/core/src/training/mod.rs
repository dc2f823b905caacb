//! Teacher-forced maximum-likelihood training, Adam and checkpoints.

mod adam;
mod checkpoint;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamSet, Var};
use crate::corpus::Report;
use crate::error::{Error, Result};
use crate::model::{Example, Summarizer};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// `-(1/L) sum_t log dist_t[target_t]`.
pub fn nll_loss(g: &mut Graph, dists: &[Var], targets: &[usize]) -> Result<Var> {
    if dists.len() != targets.len() || dists.is_empty() {
        return Err(Error::LengthMismatch {
            steps: dists.len(),
            targets: targets.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (&d, &t) in dists.iter().zip(targets) {
        if t >= g.numel(d) {
            return Err(Error::IdOutOfRange {
                id: t,
                size: g.numel(d),
            });
        }
        let p = g.pick(d, t)?;
        let lp = g.log(p)?;
        total = Some(match total {
            Some(acc) => g.add(acc, lp)?,
            None => lp,
        });
    }
    let total = total.expect("at least one step");
    Ok(g.scale(total, -1.0 / targets.len() as f64)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Global gradient-norm bound.
    pub clip: f64,
    /// Non-improving dev epochs tolerated before stopping.
    pub patience: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Stop as soon as dev per-token NLL falls below this value.
    #[serde(default)]
    pub target_dev_nll: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 16,
            max_epochs: 30,
            clip: 5.0,
            patience: 5,
            seed: 1,
            target_dev_nll: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(a.beta1 > 0.0 && a.beta1 < 1.0 && a.beta2 > 0.0 && a.beta2 < 1.0) {
            return bad("Adam decay values must lie in (0, 1)");
        }
        if !(a.eps > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.clip > 0.0) {
            return bad("clip norm must be positive");
        }
        Ok(())
    }
}

/// Dev-loss bookkeeping for early stopping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one dev value; returns whether it is a new best.
    pub fn observe(&mut self, dev: f64) -> bool {
        if dev < self.best {
            self.best = dev;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn exhausted(&self) -> bool {
        self.bad_epochs >= self.patience
    }
}

/// Everything needed to continue training where a checkpoint left off.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub stopping: EarlyStopping,
}

impl TrainState {
    pub fn new(params: &ParamSet, patience: usize) -> Self {
        Self {
            adam: AdamState::new(params),
            epoch: 0,
            stopping: EarlyStopping::new(patience),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the batch losses.
    pub train_loss: f64,
    /// Per-token dev NLL.
    pub dev_nll: f64,
    pub improved: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    TargetReached,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// State at the best dev epoch, matching the parameters left in the model.
    pub best: TrainState,
    pub best_dev_nll: f64,
    pub history: Vec<EpochStats>,
    pub stop: StopReason,
}

pub fn prepare_examples(model: &Summarizer, reports: &[Report]) -> Result<Vec<Example>> {
    reports.iter().map(|r| model.example(r)).collect()
}

/// Per-token NLL over `examples`.
pub fn dev_nll(model: &Summarizer, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for ex in examples {
        total += model.eval_loss(ex)? * ex.targets.len() as f64;
        tokens += ex.targets.len();
    }
    Ok(total / tokens.max(1) as f64)
}

/// One optimizer update from the mean loss over `batch`; returns that mean.
pub fn train_batch(
    model: &mut Summarizer,
    batch: &[&Example],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<f64> {
    model.params.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut mean = 0.0;
    for ex in batch {
        let (value, grads) = {
            let mut g = Graph::with_params(&model.params);
            let loss = model.loss(&mut g, ex)?;
            let scaled = g.scale(loss, scale)?;
            (g.scalar(loss), g.backward(scaled)?)
        };
        model.params.accumulate(&grads);
        mean += value * scale;
    }
    model.params.clip_grad_norm(cfg.clip);
    adam_step(&mut model.params, state, &cfg.adam);
    Ok(mean)
}

/// Shuffled mini-batch training with per-epoch dev evaluation. On return the
/// model holds the best-dev parameters. `resume` continues from a saved state.
pub fn train(
    model: &mut Summarizer,
    train: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if dev.is_empty() {
        return Err(Error::EmptySplit("dev"));
    }
    let mut state = resume.unwrap_or_else(|| TrainState::new(&model.params, cfg.patience));
    state.stopping.patience = cfg.patience;
    let mut best_params = model.params.clone();
    let mut best_state = state.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stop = StopReason::MaxEpochs;

    while state.epoch < cfg.max_epochs {
        let epoch = state.epoch + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut batch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            batch_losses.push(train_batch(model, &batch, &mut state.adam, cfg)?);
        }
        let dev_value = dev_nll(model, dev)?;
        let improved = state.stopping.observe(dev_value);
        state.epoch = epoch;
        if improved {
            best_params = model.params.clone();
            best_state = state.clone();
        }
        let stats = EpochStats {
            epoch,
            train_loss: batch_losses.iter().sum::<f64>() / batch_losses.len() as f64,
            dev_nll: dev_value,
            improved,
        };
        on_epoch(&stats);
        history.push(stats);
        if cfg.target_dev_nll.is_some_and(|t| dev_value < t) {
            stop = StopReason::TargetReached;
            break;
        }
        if state.stopping.exhausted() {
            stop = StopReason::Patience;
            break;
        }
    }
    best_params.zero_grad();
    model.params = best_params;
    Ok(TrainOutcome {
        best_dev_nll: best_state.stopping.best,
        best: best_state,
        history,
        stop,
    })
}
