//! Command-line front end. `run` does the work so the binary stays a thin
//! wrapper and the commands can be driven from tests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{extract, BaselineMethod, DEFAULT_SELECT};
use crate::corpus::{
    generate_synthetic_corpus, ingest, parse_report, read_corpus, write_corpus, Report,
    SplitName, SplitSpec, VocabSpec, DEFAULT_MAX_SIZE, DEFAULT_MIN_COUNT,
};
use crate::error::{Error, Result};
use crate::inference::{summarize_tokens, DecodeOptions, DEFAULT_BEAM, DEFAULT_MAX_LEN};
use crate::model::{ModelConfig, Summarizer, Variant};
use crate::rouge::{corpus_rouge, RougeReport, DEFAULT_BOOTSTRAP_SEED};
use crate::training::{prepare_examples, train, AdamConfig, Checkpoint, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "bgsum", version, about = "Background-guided radiology report summarization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and filter a raw corpus into the canonical format.
    Ingest(IngestArgs),
    /// Write a synthetic laterality corpus.
    GenSynthetic(GenSyntheticArgs),
    /// Train a summarizer and write its best checkpoint.
    Train(TrainArgs),
    /// Decode a split with a checkpoint and score it.
    Eval(EvalArgs),
    /// Summarize one JSON report read from standard input.
    Summarize(SummarizeArgs),
    /// Score an extractive baseline on a split.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Per-record keep/drop ledger as JSON lines.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SplitArgs {
    /// Train, dev and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.1, 0.2])]
    pub split_ratios: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    /// Reserve every report of this body part as the test split.
    #[arg(long)]
    pub holdout_body_part: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
}

impl SplitArgs {
    pub fn spec(&self) -> SplitSpec {
        match &self.holdout_body_part {
            Some(part) => SplitSpec::Holdout {
                body_part: part.to_lowercase(),
                dev_fraction: self.dev_fraction,
                seed: self.split_seed,
            },
            None => {
                let mut r = [0.0; 3];
                r.copy_from_slice(&self.split_ratios[..3]);
                SplitSpec::Random {
                    ratios: r,
                    seed: self.split_seed,
                }
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where the best checkpoint is written.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Variant::BackgroundGated)]
    pub variant: Variant,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Word vectors in text format used to initialize the embeddings.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub emb_dim: usize,
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 200)]
    pub dec_hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub attn_dim: usize,
    #[arg(long, default_value_t = 200)]
    pub proj_dim: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_SIZE)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    pub min_count: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 30)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Stop once dev per-token NLL is below this value.
    #[arg(long)]
    pub target_dev_nll: Option<f64>,
    /// Continue from a checkpoint: its model, split and optimizer state are
    /// reused and the model flags above are ignored.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct DecodeArgs {
    #[arg(long, default_value_t = DEFAULT_BEAM)]
    pub beam: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
}

impl From<DecodeArgs> for DecodeOptions {
    fn from(a: DecodeArgs) -> Self {
        Self {
            beam: a.beam,
            max_len: a.max_len,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Per-example predictions as JSON lines.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// ROUGE report path; printed to standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// lexrank or lsa.
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    #[command(flatten)]
    pub split_args: SplitArgs,
    /// Sentences selected per report.
    #[arg(long, default_value_t = DEFAULT_SELECT)]
    pub n: usize,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// One line of a predictions file.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
    pub reference: String,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn ensure_readable(path: &Path) -> Result<()> {
    File::open(path).map(drop).map_err(|e| Error::io(path, e))
}

fn ensure_writable_parent(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    match parent {
        Some(dir) if !dir.is_dir() => Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory does not exist"),
        )),
        _ => Ok(()),
    }
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn emit_report(report: &RougeReport, output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    match output {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{json}").map_err(|e| Error::io(p, e))?;
            w.flush().map_err(|e| Error::io(p, e))
        }
        None => writeln!(out, "{json}").map_err(|e| Error::io("<stdout>", e)),
    }
}

fn score(predictions: &[(Vec<String>, &Report)]) -> Result<RougeReport> {
    let pairs: Vec<(Vec<String>, Vec<String>)> = predictions
        .iter()
        .map(|(p, r)| (p.clone(), r.impression.clone()))
        .collect();
    corpus_rouge(&pairs, DEFAULT_BOOTSTRAP_SEED)
}

fn prediction_lines(predictions: &[(Vec<String>, &Report)]) -> Vec<Prediction> {
    predictions
        .iter()
        .map(|(p, r)| Prediction {
            id: r.id.clone(),
            prediction: p.join(" "),
            reference: r.impression.join(" "),
        })
        .collect()
}

fn sorted_by_id(reports: &[Report]) -> Vec<&Report> {
    let mut v: Vec<&Report> = reports.iter().collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

pub fn cmd_ingest(a: &IngestArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let file = File::open(&a.input).map_err(|e| Error::io(&a.input, e))?;
    ensure_writable_parent(&a.output)?;
    let outcome = ingest(BufReader::new(file))?;
    write_corpus(&a.output, &outcome.kept)?;
    if let Some(p) = &a.ledger {
        write_json_lines(p, &outcome.ledger)?;
    }
    let w = |e| Error::io("<stdout>", e);
    if outcome.ledger.is_empty() {
        writeln!(err, "warning: input contains no records").map_err(w)?;
    }
    writeln!(out, "kept {}", outcome.kept.len()).map_err(w)?;
    let dropped = outcome.ledger.iter().filter(|e| e.excluded.is_some()).count();
    writeln!(out, "dropped {dropped}").map_err(w)?;
    for (reason, n) in outcome.dropped_by_reason() {
        writeln!(out, "  dropped {reason} {n}").map_err(w)?;
    }
    for (part, n) in outcome.kept_by_body_part() {
        writeln!(out, "  body_part {part} {n}").map_err(w)?;
    }
    Ok(())
}

pub fn cmd_gen_synthetic(a: &GenSyntheticArgs, out: &mut dyn Write) -> Result<()> {
    ensure_writable_parent(&a.output)?;
    let reports = generate_synthetic_corpus(a.count, a.seed);
    write_corpus(&a.output, &reports)?;
    writeln!(out, "wrote {} reports", reports.len()).map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    ensure_readable(&a.corpus)?;
    ensure_writable_parent(&a.checkpoint)?;
    if let Some(v) = &a.vectors {
        ensure_readable(v)?;
    }
    let reports = read_corpus(&a.corpus)?;

    let train_cfg = TrainConfig {
        adam: AdamConfig {
            lr: a.lr,
            ..AdamConfig::default()
        },
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        clip: a.clip,
        patience: a.patience,
        seed: a.seed,
        target_dev_nll: a.target_dev_nll,
    };
    train_cfg.validate()?;

    let (mut model, split_spec, vocab_spec, resume) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let split = ck.split.clone().unwrap_or_else(|| a.split.spec());
            let vocab_spec = ck.vocab_spec.unwrap_or(VocabSpec {
                max_size: a.vocab_size,
                min_count: a.min_count,
            });
            (ck.model, split, vocab_spec, ck.state)
        }
        None => {
            let split = a.split.spec();
            let vocab_spec = VocabSpec {
                max_size: a.vocab_size,
                min_count: a.min_count,
            };
            let parts = split.apply(&reports)?;
            let vocab = vocab_spec.build(&parts.train);
            let cfg = ModelConfig {
                variant: a.variant,
                emb_dim: a.emb_dim,
                hidden: a.hidden,
                layers: a.layers,
                dec_hidden: a.dec_hidden,
                attn_dim: a.attn_dim,
                proj_dim: a.proj_dim,
                seed: a.seed,
            };
            let mut model = Summarizer::new(cfg, vocab)?;
            if let Some(v) = &a.vectors {
                let emb = model.embedding;
                let matched = emb.load_pretrained_file(&mut model.params, &model.vocab, v)?;
                writeln!(out, "pretrained vectors matched {matched} tokens")
                    .map_err(|e| Error::io("<stdout>", e))?;
            }
            (model, split, vocab_spec, None)
        }
    };
    let parts = split_spec.apply(&reports)?;
    let train_ex = prepare_examples(&model, &parts.train)?;
    let dev_ex = prepare_examples(&model, &parts.dev)?;
    let mut log_err = None;
    let outcome = train(&mut model, &train_ex, &dev_ex, &train_cfg, resume, |s| {
        let mark = if s.improved { " *" } else { "" };
        if let Err(e) = writeln!(
            out,
            "epoch {} train_nll {:.6} dev_nll {:.6}{mark}",
            s.epoch, s.train_loss, s.dev_nll
        ) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(Error::io("<stdout>", e));
    }
    let ck = Checkpoint {
        model,
        train_config: Some(train_cfg),
        dev_nll: Some(outcome.best_dev_nll),
        state: Some(outcome.best),
        split: Some(split_spec),
        vocab_spec: Some(vocab_spec),
    };
    ck.save(&a.checkpoint)?;
    writeln!(
        out,
        "best dev_nll {:.6}, stopped: {:?}, checkpoint {}",
        outcome.best_dev_nll,
        outcome.stop,
        a.checkpoint.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    ensure_readable(&a.corpus)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let reports = read_corpus(&a.corpus)?;
    let spec = ck.split.clone().ok_or_else(|| {
        Error::Checkpoint("checkpoint does not record how the corpus was split".into())
    })?;
    let parts = spec.apply(&reports)?;
    let rebuilt = ck.vocab_spec.unwrap_or_default().build(&parts.train);
    if rebuilt.fingerprint() != ck.model.vocab.fingerprint() {
        return Err(Error::VocabMismatch {
            checkpoint: ck.model.vocab.fingerprint(),
            corpus: rebuilt.fingerprint(),
        });
    }
    let opts = DecodeOptions::from(a.decode);
    let subset = sorted_by_id(parts.part(a.split));
    if subset.is_empty() {
        return Err(Error::EmptySplit(match a.split {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }));
    }
    let predictions = subset
        .into_iter()
        .map(|r| Ok((summarize_tokens(&ck.model, r, &opts)?, r)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(p) = &a.predictions {
        write_json_lines(p, &prediction_lines(&predictions))?;
    }
    emit_report(&score(&predictions)?, a.output.as_deref(), out)
}

pub fn cmd_summarize(a: &SummarizeArgs, input: &mut dyn Read, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut raw = String::new();
    input
        .read_to_string(&mut raw)
        .map_err(|e| Error::io("<stdin>", e))?;
    let report = parse_report(raw.trim(), 1)?;
    let tokens = summarize_tokens(&ck.model, &report, &a.decode.into())?;
    writeln!(out, "{}", tokens.join(" ")).map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_baseline(a: &BaselineArgs, out: &mut dyn Write) -> Result<()> {
    let method: BaselineMethod = a.method.parse()?;
    ensure_readable(&a.corpus)?;
    let reports = read_corpus(&a.corpus)?;
    let parts = a.split_args.spec().apply(&reports)?;
    let subset = sorted_by_id(parts.part(a.split));
    if subset.is_empty() {
        return Err(Error::EmptyList);
    }
    let predictions = subset
        .into_iter()
        .map(|r| Ok((extract(method, &r.findings, a.n)?, r)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(p) = &a.predictions {
        write_json_lines(p, &prediction_lines(&predictions))?;
    }
    emit_report(&score(&predictions)?, a.output.as_deref(), out)
}

/// Runs one parsed command.
pub fn run(
    cli: &Cli,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, out, err),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Summarize(a) => cmd_summarize(a, input, out),
        Command::Baseline(a) => cmd_baseline(a, out),
    }
}

/// The single line printed on failure: `error: <Category>: <message>`.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error: {}: {msg}", e.category())
}
