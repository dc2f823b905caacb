//! Binary checkpoint: magic, version, JSON manifest, then raw little-endian
//! f64 payload. The layout is described in `docs/checkpoint-format.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, EarlyStopping, TrainConfig, TrainState};
use crate::autodiff::Tensor;
use crate::corpus::{SplitSpec, VocabSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Summarizer};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BGSUMCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Summarizer,
    pub train_config: Option<TrainConfig>,
    /// Optimizer and early-stopping state for resuming.
    pub state: Option<TrainState>,
    pub split: Option<SplitSpec>,
    pub vocab_spec: Option<VocabSpec>,
    pub dev_nll: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TrainEntry {
    epoch: usize,
    adam_step: u64,
    patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    model: ModelConfig,
    vocab_fingerprint: String,
    vocab: Vocabulary,
    train_config: Option<TrainConfig>,
    split: Option<SplitSpec>,
    vocab_spec: Option<VocabSpec>,
    dev_nll: Option<f64>,
    train_state: Option<TrainEntry>,
    tensors: Vec<TensorEntry>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn new(model: Summarizer) -> Self {
        Self {
            model,
            train_config: None,
            state: None,
            split: None,
            vocab_spec: None,
            dev_nll: None,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let params = &self.model.params;
        let manifest = Manifest {
            format_version: CHECKPOINT_VERSION,
            model: self.model.config.clone(),
            vocab_fingerprint: format!("{:016x}", self.model.vocab.fingerprint()),
            vocab: self.model.vocab.clone(),
            train_config: self.train_config.clone(),
            split: self.split.clone(),
            vocab_spec: self.vocab_spec,
            dev_nll: self.dev_nll.filter(|v| v.is_finite()),
            train_state: self.state.as_ref().map(|s| TrainEntry {
                epoch: s.epoch,
                adam_step: s.adam.step,
                patience: s.stopping.patience,
                best: Some(s.stopping.best).filter(|v| v.is_finite()),
                bad_epochs: s.stopping.bad_epochs,
            }),
            tensors: params
                .iter()
                .map(|(_, name, t)| TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut buf = Vec::with_capacity(20 + json.len() + 8 * params.num_scalars());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, _, t) in params.iter() {
            put_f64s(&mut buf, t.data());
        }
        if let Some(s) = &self.state {
            if !s.adam.matches(params) {
                return Err(bad("optimizer state does not match the parameters"));
            }
            for m in &s.adam.m {
                put_f64s(&mut buf, m);
            }
            for v in &s.adam.v {
                put_f64s(&mut buf, v);
            }
        }
        w.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<checkpoint>", e))?;
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let json = bytes
            .get(20..20usize.saturating_add(len))
            .ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| bad(format!("manifest: {e}")))?;
        let fingerprint = format!("{:016x}", manifest.vocab.fingerprint());
        if fingerprint != manifest.vocab_fingerprint {
            return Err(bad("vocabulary fingerprint does not match its tokens"));
        }

        let payload = &bytes[20 + len..];
        if payload.len() % 8 != 0 {
            return Err(bad("payload is not a whole number of f64 values"));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = values.by_ref().take(n).collect();
            if v.len() == n {
                Ok(v)
            } else {
                Err(bad("truncated payload"))
            }
        };

        let mut model = Summarizer::new(manifest.model, manifest.vocab)?;
        if manifest.tensors.len() != model.params.len() {
            return Err(bad(format!(
                "{} tensors stored, model has {}",
                manifest.tensors.len(),
                model.params.len()
            )));
        }
        let mut ids = Vec::with_capacity(manifest.tensors.len());
        for entry in &manifest.tensors {
            let id = model
                .params
                .id(&entry.name)
                .ok_or_else(|| bad(format!("unknown tensor {}", entry.name)))?;
            if model.params.get(id).shape() != entry.shape.as_slice() {
                return Err(bad(format!("shape mismatch for {}", entry.name)));
            }
            let n = entry.shape.iter().product();
            let t = Tensor::new(entry.shape.clone(), take(n)?)?;
            model.params.set(id, t)?;
            ids.push(id);
        }
        let state = match manifest.train_state {
            Some(ts) => {
                let sizes: Vec<usize> = manifest
                    .tensors
                    .iter()
                    .map(|e| e.shape.iter().product())
                    .collect();
                let m = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
                let v = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
                // Moments are stored in manifest order; the optimizer indexes
                // them by parameter order.
                let mut adam = AdamState::new(&model.params);
                for ((id, m), v) in ids.iter().zip(m).zip(v) {
                    adam.m[id.index()] = m;
                    adam.v[id.index()] = v;
                }
                adam.step = ts.adam_step;
                Some(TrainState {
                    adam,
                    epoch: ts.epoch,
                    stopping: EarlyStopping {
                        patience: ts.patience,
                        best: ts.best.unwrap_or(f64::INFINITY),
                        bad_epochs: ts.bad_epochs,
                    },
                })
            }
            None => None,
        };
        if values.next().is_some() {
            return Err(bad("trailing payload"));
        }
        Ok(Self {
            model,
            train_config: manifest.train_config,
            state,
            split: manifest.split,
            vocab_spec: manifest.vocab_spec,
            dev_nll: manifest.dev_nll,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}
