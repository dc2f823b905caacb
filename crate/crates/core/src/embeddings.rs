//! Token embedding table and the text word-vector loader.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const DEFAULT_EMBEDDING_DIM: usize = 100;
pub const EMBEDDING_INIT_RANGE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub matrix: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Registers a `[vocab_size x dim]` table drawn uniformly from ±0.1.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        vocab_size: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let t = Tensor::from_fn(&[vocab_size, dim], |_| {
            rng.gen_range(-EMBEDDING_INIT_RANGE..=EMBEDDING_INIT_RANGE)
        });
        Self {
            matrix: params.add(name, t),
            vocab_size,
            dim,
        }
    }

    /// `[ids.len() x dim]` rows of the table; differentiable into it.
    pub fn lookup(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::IdOutOfRange {
                id: bad,
                size: self.vocab_size,
            });
        }
        let m = g.param(self.matrix);
        Ok(g.gather_rows(m, ids)?)
    }

    /// One embedding as a `[dim]` vector.
    pub fn lookup_one(&self, g: &mut Graph, id: usize) -> Result<Var> {
        if id >= self.vocab_size {
            return Err(Error::IdOutOfRange {
                id,
                size: self.vocab_size,
            });
        }
        let m = g.param(self.matrix);
        Ok(g.row(m, id)?)
    }

    /// Overwrites rows of tokens found in a word-vector file and returns how
    /// many vocabulary entries were matched. Rows of unmatched tokens are left
    /// as they are.
    ///
    /// Each line is a token followed by `dim` space-separated reals. A leading
    /// `count dim` header line is accepted and skipped.
    pub fn load_pretrained(
        &self,
        params: &mut ParamSet,
        vocab: &Vocabulary,
        reader: impl BufRead,
    ) -> Result<usize> {
        let mut matched = HashSet::new();
        let dim = self.dim;
        let table = params.get_mut(self.matrix);
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io("<vectors>", e))?;
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let Some(token) = fields.next() else {
                continue;
            };
            let values: Vec<&str> = fields.collect();
            if lineno == 1
                && values.len() == 1
                && token.parse::<usize>().is_ok()
                && values[0].parse::<usize>().is_ok()
            {
                continue;
            }
            let values = values
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| Error::MalformedLine(lineno))?;
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedLine(lineno));
            }
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                });
            }
            if let Some(id) = vocab.get(token) {
                if matched.insert(id) {
                    table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
                }
            }
        }
        Ok(matched.len())
    }

    pub fn load_pretrained_file(
        &self,
        params: &mut ParamSet,
        vocab: &Vocabulary,
        path: impl AsRef<Path>,
    ) -> Result<usize> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        self.load_pretrained(params, vocab, BufReader::new(file))
    }
}
