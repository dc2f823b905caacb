//! Report parsing, filtering, splitting, vocabularies and the synthetic
//! laterality corpus.

mod ingest;
mod report;
mod split;
mod synthetic;
mod vocab;

pub use ingest::{
    cap_body_parts, ingest, read_corpus, read_corpus_from, write_corpus, write_corpus_to,
    Exclusion, IngestOutcome, LedgerEntry,
};
pub use report::{
    filter_report, parse_report, tokenize, DropReason, FilterDecision, Report,
    MIN_FINDINGS_TOKENS, MIN_IMPRESSION_TOKENS,
};
pub use split::{apportion, holdout_body_part, split_corpus, CorpusSplit, SplitName, SplitSpec};
pub use synthetic::{generate_synthetic_corpus, laterality, LATERALITIES};
pub use vocab::{
    build_vocab, VocabSpec, Vocabulary, DEFAULT_MAX_SIZE, DEFAULT_MIN_COUNT, EOS, PAD, RESERVED, SOS, UNK,
};
