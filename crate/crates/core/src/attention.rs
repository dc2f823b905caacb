//! Additive attention: the per-step findings attention and the one-shot
//! background attention that yields the background vector.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::encoder::RECURRENT_INIT_RANGE;
use crate::error::{Error, Result};

/// Scores `v . tanh(W_states h_i + W_query q + bias)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnParams {
    /// `[a x state_dim]`
    pub w_states: ParamId,
    /// `[a x query_dim]`
    pub w_query: ParamId,
    /// `[a]`
    pub bias: ParamId,
    /// `[a]`
    pub v: ParamId,
    pub dim: usize,
}

impl AttnParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        state_dim: usize,
        query_dim: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let r = RECURRENT_INIT_RANGE;
        Self {
            w_states: params.add(
                format!("{name}.w_states"),
                Tensor::uniform(&[dim, state_dim], r, rng),
            ),
            w_query: params.add(
                format!("{name}.w_query"),
                Tensor::uniform(&[dim, query_dim], r, rng),
            ),
            bias: params.add(format!("{name}.bias"), Tensor::zeros(&[dim])),
            v: params.add(format!("{name}.v"), Tensor::uniform(&[dim], r, rng)),
            dim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionResult {
    /// `[N]`, a probability vector.
    pub weights: Var,
    /// `[state_dim]`, `sum_i weights[i] * states[i]`.
    pub context: Var,
}

/// Encoder states together with their query-independent projection, which is
/// computed once per example and reused at every decoding step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnKeys {
    pub states: Var,
    /// `[N x a]`: `states W_statesᵀ + bias`.
    pub keys: Var,
}

pub fn prepare_keys(g: &mut Graph, states: Var, p: &AttnParams) -> Result<AttnKeys> {
    match g.shape(states) {
        [n, _] if *n > 0 => {}
        _ => return Err(Error::EmptyStates),
    }
    let w = g.param(p.w_states);
    let wt = g.transpose(w)?;
    let proj = g.matmul(states, wt)?;
    let b = g.param(p.bias);
    let keys = g.add_row(proj, b)?;
    Ok(AttnKeys { states, keys })
}

/// Softmax over `scores` and the matching weighted sum of `states` rows.
pub fn weighted_context(g: &mut Graph, scores: Var, states: Var) -> Result<AttentionResult> {
    if g.numel(scores) == 0 {
        return Err(Error::EmptyStates);
    }
    let weights = g.softmax(scores)?;
    let context = g.matmul(weights, states)?;
    Ok(AttentionResult { weights, context })
}

pub fn attend_keys(
    g: &mut Graph,
    keys: &AttnKeys,
    query: Var,
    p: &AttnParams,
) -> Result<AttentionResult> {
    let wq = g.param(p.w_query);
    let q = g.matmul(wq, query)?;
    let pre = g.add_row(keys.keys, q)?;
    let act = g.tanh(pre)?;
    let v = g.param(p.v);
    let scores = g.matmul(act, v)?;
    weighted_context(g, scores, keys.states)
}

/// Attention of `query` over `states` (`[N x state_dim]`).
pub fn attend(g: &mut Graph, states: Var, query: Var, p: &AttnParams) -> Result<AttentionResult> {
    let keys = prepare_keys(g, states, p)?;
    attend_keys(g, &keys, query, p)
}

/// The background vector: attention over background states queried by the
/// findings encoder's final state. Computed once per example.
pub fn background_vector(
    g: &mut Graph,
    bg_states: Var,
    findings_final: Var,
    p: &AttnParams,
) -> Result<Var> {
    Ok(attend(g, bg_states, findings_final, p)?.context)
}
