//! The three summarizer variants assembled from the encoder, attention and
//! decoder pieces, plus per-example preparation of token ids.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{background_vector, prepare_keys, AttnKeys, AttnParams};
use crate::autodiff::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::corpus::{Report, Vocabulary, EOS, SOS};
use crate::decoder::{
    step_background, step_plain, DecoderDims, DecoderParams, DecoderStep, ExtendedVocab,
    SourceContext,
};
use crate::embeddings::{EmbeddingTable, DEFAULT_EMBEDDING_DIM};
use crate::encoder::{encode, encode_background, BiRnnParams, RECURRENT_INIT_RANGE};
use crate::error::{Error, Result};
use crate::training::nll_loss;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Pointer-generator over the findings only.
    Plain,
    /// Pointer-generator over background followed by findings.
    PrependBackground,
    /// Background encoder, background attention and the gated decoder kernel.
    BackgroundGated,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::PrependBackground => "prepend-background",
            Variant::BackgroundGated => "background-gated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub emb_dim: usize,
    /// Per direction.
    pub hidden: usize,
    pub layers: usize,
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub proj_dim: usize,
    /// Seeds parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::BackgroundGated,
            emb_dim: DEFAULT_EMBEDDING_DIM,
            hidden: 100,
            layers: 2,
            dec_hidden: 200,
            attn_dim: 200,
            proj_dim: 200,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("emb_dim", self.emb_dim),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("dec_hidden", self.dec_hidden),
            ("attn_dim", self.attn_dim),
            ("proj_dim", self.proj_dim),
        ];
        match dims.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::InvalidConfig(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }
}

/// Token ids of one source side, independent of any target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Source {
    pub tokens: Vec<String>,
    pub ext: ExtendedVocab,
    /// Encoder inputs; OOV tokens map to UNK.
    pub encoder_ids: Vec<usize>,
    /// Empty unless the variant encodes the background separately.
    pub background_ids: Vec<usize>,
}

/// A source with its teacher-forcing sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub source: Source,
    /// Extended-vocabulary ids of the impression followed by EOS.
    pub targets: Vec<usize>,
    /// SOS then the embedding rows of every target but the last.
    pub decoder_inputs: Vec<usize>,
}

/// Per-example encoder outputs consumed by every decoding step.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub keys: AttnKeys,
    pub s0: Var,
    pub c0: Var,
    pub background: Option<Var>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bridge {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summarizer {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pub embedding: EmbeddingTable,
    pub findings_encoder: BiRnnParams,
    pub background_encoder: Option<BiRnnParams>,
    pub background_attn: Option<AttnParams>,
    pub bridge: Option<Bridge>,
    pub decoder: DecoderParams,
}

impl Summarizer {
    /// Freshly initialized parameters; the layout depends only on `config`
    /// and the vocabulary size.
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let v = vocab.len();
        let ctx = 2 * config.hidden;
        let embedding = EmbeddingTable::new(&mut params, "embedding", v, config.emb_dim, &mut rng);
        let findings_encoder = BiRnnParams::new(
            &mut params,
            "findings_encoder",
            config.emb_dim,
            config.hidden,
            config.layers,
            &mut rng,
        );
        let gated = config.variant == Variant::BackgroundGated;
        let (background_encoder, background_attn) = if gated {
            let enc = BiRnnParams::new(
                &mut params,
                "background_encoder",
                config.emb_dim,
                config.hidden,
                config.layers,
                &mut rng,
            );
            let attn = AttnParams::new(&mut params, "background_attn", ctx, ctx, config.attn_dim, &mut rng);
            (Some(enc), Some(attn))
        } else {
            (None, None)
        };
        let bridge = (config.dec_hidden != ctx).then(|| Bridge {
            weight: params.add(
                "bridge.weight",
                Tensor::uniform(&[config.dec_hidden, ctx], RECURRENT_INIT_RANGE, &mut rng),
            ),
            bias: params.add("bridge.bias", Tensor::zeros(&[config.dec_hidden])),
        });
        let dims = DecoderDims {
            emb_dim: config.emb_dim,
            context_dim: ctx,
            hidden: config.dec_hidden,
            attn_dim: config.attn_dim,
            proj_dim: config.proj_dim,
            vocab_size: v,
        };
        let decoder = DecoderParams::new(&mut params, "decoder", dims, gated, &mut rng);
        Ok(Self {
            config,
            vocab,
            params,
            embedding,
            findings_encoder,
            background_encoder,
            background_attn,
            bridge,
            decoder,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn source(&self, report: &Report) -> Result<Source> {
        if report.findings.is_empty() {
            return Err(Error::EmptyFindings);
        }
        let tokens: Vec<String> = match self.variant() {
            Variant::PrependBackground => report
                .background
                .iter()
                .chain(&report.findings)
                .cloned()
                .collect(),
            _ => report.findings.clone(),
        };
        let background_ids = if self.variant() == Variant::BackgroundGated {
            if report.background.is_empty() {
                return Err(Error::MissingSection("background".into()));
            }
            self.vocab.encode(&report.background)
        } else {
            Vec::new()
        };
        Ok(Source {
            ext: ExtendedVocab::new(&self.vocab, &tokens),
            encoder_ids: self.vocab.encode(&tokens),
            background_ids,
            tokens,
        })
    }

    pub fn example(&self, report: &Report) -> Result<Example> {
        let source = self.source(report)?;
        let mut targets: Vec<usize> = report
            .impression
            .iter()
            .map(|t| source.ext.id(&self.vocab, t))
            .collect();
        targets.push(EOS);
        let decoder_inputs = std::iter::once(SOS)
            .chain(targets[..targets.len() - 1].iter().map(|&t| source.ext.embedding_id(t)))
            .collect();
        Ok(Example {
            source,
            targets,
            decoder_inputs,
        })
    }

    /// Runs the encoders, the bridge and (for the gated variant) the
    /// background attention.
    pub fn encode(&self, g: &mut Graph, src: &Source) -> Result<Encoded> {
        let emb = self.embedding.lookup(g, &src.encoder_ids)?;
        let enc = encode(g, emb, &self.findings_encoder)?;
        let keys = prepare_keys(g, enc.states, &self.decoder.attn)?;
        let background = match (&self.background_encoder, &self.background_attn) {
            (Some(bg_enc), Some(bg_attn)) => {
                let bg_emb = self.embedding.lookup(g, &src.background_ids)?;
                let bg = encode_background(g, bg_emb, bg_enc)?;
                Some(background_vector(g, bg.states, enc.final_state, bg_attn)?)
            }
            _ => None,
        };
        let s0 = match self.bridge {
            Some(b) => {
                let w = g.param(b.weight);
                let bias = g.param(b.bias);
                let s = g.matmul(w, enc.final_state)?;
                g.add(s, bias)?
            }
            None => enc.final_state,
        };
        let c0 = g.constant(&[self.config.dec_hidden], vec![0.0; self.config.dec_hidden])?;
        Ok(Encoded {
            keys,
            s0,
            c0,
            background,
        })
    }

    /// One decoder step fed with the embedding row `prev_id`.
    pub fn step(
        &self,
        g: &mut Graph,
        enc: &Encoded,
        ext: &ExtendedVocab,
        s_prev: Var,
        c_prev: Var,
        prev_id: usize,
    ) -> Result<DecoderStep> {
        let y = self.embedding.lookup_one(g, ext.embedding_id(prev_id))?;
        let src = SourceContext {
            keys: enc.keys,
            ext,
        };
        match enc.background {
            Some(b) => step_background(g, s_prev, c_prev, y, b, &src, &self.decoder),
            None => step_plain(g, s_prev, c_prev, y, &src, &self.decoder),
        }
    }

    /// Teacher-forced decoder steps for `ex`.
    pub fn teacher_forced(&self, g: &mut Graph, ex: &Example) -> Result<Vec<DecoderStep>> {
        let enc = self.encode(g, &ex.source)?;
        let (mut s, mut c) = (enc.s0, enc.c0);
        let mut steps = Vec::with_capacity(ex.decoder_inputs.len());
        for &prev in &ex.decoder_inputs {
            let st = self.step(g, &enc, &ex.source.ext, s, c, prev)?;
            s = st.s;
            c = st.c;
            steps.push(st);
        }
        Ok(steps)
    }

    /// Mean per-token negative log-likelihood of `ex` under teacher forcing.
    pub fn loss(&self, g: &mut Graph, ex: &Example) -> Result<Var> {
        let steps = self.teacher_forced(g, ex)?;
        let dists: Vec<Var> = steps.iter().map(|s| s.dist).collect();
        nll_loss(g, &dists, &ex.targets)
    }

    /// Loss value without recording gradients.
    pub fn eval_loss(&self, ex: &Example) -> Result<f64> {
        let mut g = Graph::inference(&self.params);
        let l = self.loss(&mut g, ex)?;
        Ok(g.scalar(l))
    }
}
