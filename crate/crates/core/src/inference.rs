//! Greedy and beam-search decoding over any step-wise model, and the neural
//! summarizer adapter.

use std::cmp::Ordering;

use crate::attention::AttnKeys;
use crate::autodiff::{Graph, Tensor};
use crate::corpus::{Report, EOS, SOS};
use crate::decoder::ExtendedVocab;
use crate::error::{Error, Result};
use crate::model::{Encoded, Source, Summarizer};

pub const DEFAULT_BEAM: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 100;

/// A decoder seen as a sequence of next-token distributions.
pub trait StepModel {
    type State: Clone;

    fn initial(&self) -> Result<Self::State>;

    /// Log-probabilities of every next token after feeding `prev`, and the
    /// state that follows.
    fn step(&self, state: &Self::State, prev: usize) -> Result<(Vec<f64>, Self::State)>;

    fn start_token(&self) -> usize {
        SOS
    }

    fn end_token(&self) -> usize {
        EOS
    }
}

#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    /// Emitted tokens; a finished hypothesis ends with the end token.
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub state: S,
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    /// Log-probability per emitted token.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.logprob / self.tokens.len() as f64
        }
    }
}

/// Higher score first, then the lexicographically smaller token sequence.
pub fn rank(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.cmp(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeOptions {
    pub beam: usize,
    pub max_len: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam: DEFAULT_BEAM,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

fn validate(beam: usize, max_len: usize) -> Result<()> {
    if beam == 0 || max_len == 0 {
        return Err(Error::InvalidConfig("beam and max_len must be positive".into()));
    }
    Ok(())
}

/// Argmax decoding; ties go to the smaller token id.
pub fn greedy<M: StepModel>(model: &M, max_len: usize) -> Result<Hypothesis<M::State>> {
    validate(1, max_len)?;
    let mut h = Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        state: model.initial()?,
        finished: false,
    };
    while h.tokens.len() < max_len {
        let prev = h.tokens.last().copied().unwrap_or(model.start_token());
        let (logp, next) = model.step(&h.state, prev)?;
        let (best, lp) = logp
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, lp)| if lp > acc.1 { (k, lp) } else { acc });
        h.tokens.push(best);
        h.logprob += lp;
        h.state = next;
        if best == model.end_token() {
            h.finished = true;
            break;
        }
    }
    Ok(h)
}

/// Beam search of width `beam`.
///
/// Each step keeps the `beam` best one-token expansions of the live
/// hypotheses, ranked by accumulated log-probability. Expansions ending in
/// the end token are set aside and no longer take a slot. At the end the set
/// aside hypotheses, the live ones cut off at `max_len` and the greedy
/// decode compete on [`Hypothesis::score`].
pub fn beam_search<M: StepModel>(
    model: &M,
    beam: usize,
    max_len: usize,
) -> Result<Hypothesis<M::State>> {
    validate(beam, max_len)?;
    let end = model.end_token();
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        state: model.initial()?,
        finished: false,
    }];
    let mut done: Vec<Hypothesis<M::State>> = Vec::new();

    for _ in 0..max_len {
        // (parent, token, logprob, next state)
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        let mut states = Vec::with_capacity(alive.len());
        for (i, h) in alive.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(model.start_token());
            let (logp, next) = model.step(&h.state, prev)?;
            let mut own: Vec<(usize, f64)> = logp
                .into_iter()
                .enumerate()
                .filter(|(_, lp)| lp.is_finite())
                .map(|(k, lp)| (k, h.logprob + lp))
                .collect();
            // A parent contributes at most `beam` children to the global top.
            own.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
            own.truncate(beam);
            cands.extend(own.into_iter().map(|(k, lp)| (i, k, lp)));
            states.push(next);
        }
        cands.sort_by(|a, b| {
            b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then_with(|| {
                let ta = alive[a.0].tokens.iter().chain(std::iter::once(&a.1));
                let tb = alive[b.0].tokens.iter().chain(std::iter::once(&b.1));
                ta.cmp(tb)
            })
        });
        cands.truncate(beam);

        let mut next_alive = Vec::with_capacity(beam);
        for (parent, token, lp) in cands {
            let mut tokens = alive[parent].tokens.clone();
            tokens.push(token);
            let h = Hypothesis {
                tokens,
                logprob: lp,
                state: states[parent].clone(),
                finished: token == end,
            };
            if h.finished {
                done.push(h);
            } else {
                next_alive.push(h);
            }
        }
        alive = next_alive;
        if alive.is_empty() {
            break;
        }
    }

    done.extend(alive);
    done.push(greedy(model, max_len)?);
    done.sort_by(|a, b| rank(a.score(), &a.tokens, b.score(), &b.tokens));
    Ok(done.swap_remove(0))
}

/// Decoder state between steps, detached from any graph.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralState {
    pub s: Tensor,
    pub c: Tensor,
}

/// A summarizer bound to one source, stepping with a fresh inference graph
/// per call and the encoder outputs held as plain tensors.
pub struct NeuralStepper<'m> {
    model: &'m Summarizer,
    source: Source,
    states: Tensor,
    keys: Tensor,
    background: Option<Tensor>,
    s0: Tensor,
    c0: Tensor,
}

impl<'m> NeuralStepper<'m> {
    pub fn new(model: &'m Summarizer, source: Source) -> Result<Self> {
        let mut g = Graph::inference(&model.params);
        let enc = model.encode(&mut g, &source)?;
        Ok(Self {
            states: g.tensor(enc.keys.states),
            keys: g.tensor(enc.keys.keys),
            background: enc.background.map(|b| g.tensor(b)),
            s0: g.tensor(enc.s0),
            c0: g.tensor(enc.c0),
            model,
            source,
        })
    }

    pub fn ext(&self) -> &ExtendedVocab {
        &self.source.ext
    }

    /// The background vector used at every step, if the variant has one.
    pub fn background(&self) -> Option<&Tensor> {
        self.background.as_ref()
    }
}

impl StepModel for NeuralStepper<'_> {
    type State = NeuralState;

    fn initial(&self) -> Result<NeuralState> {
        Ok(NeuralState {
            s: self.s0.clone(),
            c: self.c0.clone(),
        })
    }

    fn step(&self, state: &NeuralState, prev: usize) -> Result<(Vec<f64>, NeuralState)> {
        let mut g = Graph::inference(&self.model.params);
        let keys = AttnKeys {
            states: g.leaf(&self.states),
            keys: g.leaf(&self.keys),
        };
        let s = g.leaf(&state.s);
        let c = g.leaf(&state.c);
        let enc = Encoded {
            keys,
            s0: s,
            c0: c,
            background: self.background.as_ref().map(|b| g.leaf(b)),
        };
        let st = self.model.step(&mut g, &enc, &self.source.ext, s, c, prev)?;
        let logp = g.value(st.dist).iter().map(|p| p.ln()).collect();
        Ok((
            logp,
            NeuralState {
                s: g.tensor(st.s),
                c: g.tensor(st.c),
            },
        ))
    }
}

/// Decodes `report` and maps ids back to surface tokens, copied OOV ids
/// included. The end token is dropped.
pub fn summarize_tokens(
    model: &Summarizer,
    report: &Report,
    opts: &DecodeOptions,
) -> Result<Vec<String>> {
    let source = model.source(report)?;
    let stepper = NeuralStepper::new(model, source)?;
    let best = beam_search(&stepper, opts.beam, opts.max_len)?;
    Ok(best
        .tokens
        .iter()
        .filter(|&&t| t != EOS)
        .map(|&t| {
            stepper
                .ext()
                .token(&model.vocab, t)
                .unwrap_or(crate::corpus::RESERVED[crate::corpus::UNK])
                .to_string()
        })
        .collect())
}

/// The decoded summary as a single-space-joined string.
pub fn summarize(model: &Summarizer, report: &Report, opts: &DecodeOptions) -> Result<String> {
    Ok(summarize_tokens(model, report, opts)?.join(" "))
}
