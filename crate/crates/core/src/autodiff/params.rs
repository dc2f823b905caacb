use serde::{Deserialize, Serialize};

use super::graph::{GradBuf, Gradients};
use super::{Tensor, TensorError};

/// Handle to one tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, enumerable collection of learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(tensor.with_requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Replaces the values of an existing parameter, keeping its shape.
    pub fn set(&mut self, id: ParamId, values: Tensor) -> Result<(), TensorError> {
        let current = &mut self.tensors[id.0];
        if current.shape() != values.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "set",
                left: current.shape().to_vec(),
                right: values.shape().to_vec(),
            });
        }
        current.data_mut().copy_from_slice(values.data());
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    /// Adds the parameter gradients of one backward pass into the grad slots.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, buf) in grads.params() {
            let t = &mut self.tensors[id.0];
            match buf {
                GradBuf::Dense(g) => t.accumulate_grad(g),
                GradBuf::Rows { rows, .. } => {
                    for (r, g) in rows {
                        t.accumulate_grad_row(*r, g);
                    }
                }
            }
        }
    }

    /// L2 norm over every populated gradient slot.
    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(Tensor::grad)
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for t in &mut self.tensors {
                if let Some(g) = t.grad_mut() {
                    g.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        norm
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }
}
