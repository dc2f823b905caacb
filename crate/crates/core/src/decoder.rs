//! Single-layer attentional decoder with the generate/copy mixture, in a
//! plain form and a background-gated form whose recurrent kernel also reads
//! the background vector at every step.

use rand::Rng;

use crate::attention::{attend_keys, AttnKeys, AttnParams};
use crate::autodiff::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::corpus::{Vocabulary, UNK};
use crate::encoder::{lstm_cell, LstmParams, RECURRENT_INIT_RANGE};
use crate::error::{Error, Result};

/// Base vocabulary extended with per-example ids for source tokens the base
/// vocabulary lacks. Extended ids start at the base size and are only
/// meaningful for the example they were built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedVocab {
    base_len: usize,
    oovs: Vec<String>,
    source_ids: Vec<usize>,
}

impl ExtendedVocab {
    pub fn new(vocab: &Vocabulary, source: &[String]) -> Self {
        let base_len = vocab.len();
        let mut oovs: Vec<String> = Vec::new();
        let source_ids = source
            .iter()
            .map(|t| match vocab.get(t) {
                Some(id) => id,
                None => match oovs.iter().position(|o| o == t) {
                    Some(k) => base_len + k,
                    None => {
                        oovs.push(t.clone());
                        base_len + oovs.len() - 1
                    }
                },
            })
            .collect();
        Self {
            base_len,
            oovs,
            source_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.base_len + self.oovs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn oovs(&self) -> &[String] {
        &self.oovs
    }

    /// Extended id of every source position.
    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    /// Base id when known, else the source-copy id, else UNK.
    pub fn id(&self, vocab: &Vocabulary, token: &str) -> usize {
        vocab.get(token).unwrap_or_else(|| {
            self.oovs
                .iter()
                .position(|o| o == token)
                .map_or(UNK, |k| self.base_len + k)
        })
    }

    pub fn token<'a>(&'a self, vocab: &'a Vocabulary, id: usize) -> Option<&'a str> {
        if id < self.base_len {
            vocab.token(id)
        } else {
            self.oovs.get(id - self.base_len).map(String::as_str)
        }
    }

    /// Row of the embedding table used to feed `id` back into the decoder;
    /// copied OOV tokens have no embedding of their own and use UNK.
    pub fn embedding_id(&self, id: usize) -> usize {
        if id < self.base_len {
            id
        } else {
            UNK
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderParams {
    /// Kernel input is `[y_prev]` (plain) or `[y_prev; b]` (gated); the
    /// recurrent state comes first, so kernel columns are `[s; y; b]`.
    pub cell: LstmParams,
    pub attn: AttnParams,
    /// `[p x (hidden + context_dim)]`
    pub proj: ParamId,
    pub proj_bias: ParamId,
    /// `[vocab x p]`
    pub out: ParamId,
    pub out_bias: ParamId,
    /// `[context_dim]`
    pub w_context: ParamId,
    /// `[hidden]`
    pub w_state: ParamId,
    /// `[emb_dim]`
    pub w_prev: ParamId,
    /// `[1]`
    pub gen_bias: ParamId,
    pub hidden: usize,
    pub emb_dim: usize,
    pub context_dim: usize,
    pub vocab_size: usize,
    pub gated: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderDims {
    pub emb_dim: usize,
    pub context_dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub proj_dim: usize,
    pub vocab_size: usize,
}

impl DecoderParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        dims: DecoderDims,
        gated: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let DecoderDims {
            emb_dim,
            context_dim,
            hidden,
            attn_dim,
            proj_dim,
            vocab_size,
        } = dims;
        let r = RECURRENT_INIT_RANGE;
        let cell_input = emb_dim + if gated { context_dim } else { 0 };
        let cell = LstmParams::new(params, &format!("{name}.cell"), cell_input, hidden, rng);
        let attn = AttnParams::new(params, &format!("{name}.attn"), context_dim, hidden, attn_dim, rng);
        let mut add = |n: &str, t: Tensor| params.add(format!("{name}.{n}"), t);
        Self {
            cell,
            attn,
            proj: add("proj", Tensor::uniform(&[proj_dim, hidden + context_dim], r, rng)),
            proj_bias: add("proj_bias", Tensor::zeros(&[proj_dim])),
            out: add("out", Tensor::uniform(&[vocab_size, proj_dim], r, rng)),
            out_bias: add("out_bias", Tensor::zeros(&[vocab_size])),
            w_context: add("pgen.w_context", Tensor::uniform(&[context_dim], r, rng)),
            w_state: add("pgen.w_state", Tensor::uniform(&[hidden], r, rng)),
            w_prev: add("pgen.w_prev", Tensor::uniform(&[emb_dim], r, rng)),
            gen_bias: add("pgen.bias", Tensor::zeros(&[1])),
            hidden,
            emb_dim,
            context_dim,
            vocab_size,
            gated,
        }
    }

    /// Column range of the gated kernel that multiplies the background vector.
    pub fn background_columns(&self) -> std::ops::Range<usize> {
        let start = self.hidden + self.emb_dim;
        start..start + if self.gated { self.context_dim } else { 0 }
    }
}

/// Findings-side inputs shared by every step of one example.
#[derive(Clone, Copy, Debug)]
pub struct SourceContext<'a> {
    pub keys: AttnKeys,
    pub ext: &'a ExtendedVocab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderStep {
    pub s: Var,
    pub c: Var,
    /// Attention over source positions.
    pub attn: Var,
    /// Context vector: attention-weighted source states.
    pub context: Var,
    pub p_gen: Var,
    /// Generation distribution over the base vocabulary.
    pub p_vocab: Var,
    /// Final distribution over the extended vocabulary.
    pub dist: Var,
}

/// `sigmoid(w_context . h* + w_state . s + w_prev . y_prev + bias)`.
pub fn p_gen(g: &mut Graph, h_star: Var, s: Var, y_prev_emb: Var, p: &DecoderParams) -> Result<Var> {
    let wc = g.param(p.w_context);
    let ws = g.param(p.w_state);
    let wy = g.param(p.w_prev);
    let b = g.param(p.gen_bias);
    let a = g.matmul(wc, h_star)?;
    let c = g.matmul(ws, s)?;
    let d = g.matmul(wy, y_prev_emb)?;
    let logit = g.add(a, c)?;
    let logit = g.add(logit, d)?;
    let logit = g.add(logit, b)?;
    Ok(g.sigmoid(logit)?)
}

/// `p_gen * P_vocab` padded to the extended vocabulary plus
/// `(1 - p_gen) * attention` scattered onto the source tokens' extended ids.
/// Repeated source tokens pool their attention mass.
pub fn mixture(
    g: &mut Graph,
    p_gen: Var,
    p_vocab: Var,
    attn: Var,
    source_ids: &[usize],
    ext_len: usize,
) -> Result<Var> {
    let gen = g.mul_scalar(p_vocab, p_gen)?;
    let gen = g.pad(gen, ext_len)?;
    let copy = g.scatter_add(attn, source_ids, ext_len)?;
    let p_copy = g.one_minus(p_gen)?;
    let copy = g.mul_scalar(copy, p_copy)?;
    Ok(g.add(gen, copy)?)
}

/// Generation distribution `softmax(out tanh(proj [s; h*] + b) + b')`.
pub fn vocab_distribution(g: &mut Graph, s: Var, h_star: Var, p: &DecoderParams) -> Result<Var> {
    let sh = g.concat(&[s, h_star])?;
    let proj = g.param(p.proj);
    let proj_bias = g.param(p.proj_bias);
    let hidden = g.matmul(proj, sh)?;
    let hidden = g.add(hidden, proj_bias)?;
    let hidden = g.tanh(hidden)?;
    let out = g.param(p.out);
    let out_bias = g.param(p.out_bias);
    let logits = g.matmul(out, hidden)?;
    let logits = g.add(logits, out_bias)?;
    Ok(g.softmax(logits)?)
}

fn step(
    g: &mut Graph,
    s_prev: Var,
    c_prev: Var,
    y_prev_emb: Var,
    background: Option<Var>,
    src: &SourceContext,
    p: &DecoderParams,
) -> Result<DecoderStep> {
    let x = match background {
        Some(b) => g.concat(&[y_prev_emb, b])?,
        None => y_prev_emb,
    };
    let (s, c) = lstm_cell(g, x, s_prev, c_prev, &p.cell)?;
    let att = attend_keys(g, &src.keys, s, &p.attn)?;
    let p_vocab = vocab_distribution(g, s, att.context, p)?;
    let pg = p_gen(g, att.context, s, y_prev_emb, p)?;
    let dist = mixture(g, pg, p_vocab, att.weights, src.ext.source_ids(), src.ext.len())?;
    Ok(DecoderStep {
        s,
        c,
        attn: att.weights,
        context: att.context,
        p_gen: pg,
        p_vocab,
        dist,
    })
}

/// One step of the plain pointer-generator decoder.
pub fn step_plain(
    g: &mut Graph,
    s_prev: Var,
    c_prev: Var,
    y_prev_emb: Var,
    src: &SourceContext,
    p: &DecoderParams,
) -> Result<DecoderStep> {
    if p.gated {
        return Err(Error::InvalidConfig(
            "plain step on a background-gated decoder".into(),
        ));
    }
    step(g, s_prev, c_prev, y_prev_emb, None, src, p)
}

/// One step of the background-gated decoder; `b` is the same vector at
/// every step of an example.
pub fn step_background(
    g: &mut Graph,
    s_prev: Var,
    c_prev: Var,
    y_prev_emb: Var,
    b: Var,
    src: &SourceContext,
    p: &DecoderParams,
) -> Result<DecoderStep> {
    if !p.gated {
        return Err(Error::InvalidConfig(
            "background step on a plain decoder".into(),
        ));
    }
    if g.shape(b) != [p.context_dim] {
        return Err(Error::Tensor(crate::autodiff::TensorError::ShapeMismatch {
            op: "step_background",
            left: g.shape(b).to_vec(),
            right: vec![p.context_dim],
        }));
    }
    step(g, s_prev, c_prev, y_prev_emb, Some(b), src, p)
}
