//! Toolkit for cleaning web-crawled parallel corpora and evaluating
//! translation output.
//!
//! The crate is organised around the two cleaning phases and the
//! instruments used to judge them:
//!
//! - [`corpus`]: sentence pairs, score sidecars and their file formats.
//! - [`langid`] and [`charlm`]: character n-gram language identification and
//!   bits-per-character scoring.
//! - [`filter`]: threshold-based heuristic filtering (phase one).
//! - [`kfold`]: cross-validated perplexity selection (phase two).
//! - [`metrics`]: BLEU, chrF and chrF++ compatible with the 13a conventions.
//! - [`oracle`]: oracle selection over decoder n-best lists.
//! - [`prompt`]: `[INST]`-style prompt and loss-mask construction.
//! - [`pipeline`]: end-to-end commands used by the CLI.

pub mod charlm;
pub mod config;
pub mod corpus;
pub mod error;
pub mod filter;
pub mod kfold;
pub mod langid;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod prompt;
mod text;

pub use error::{Error, Result};

/// Versions of every persisted format, reported by `dragoman version`.
pub const FORMAT_VERSIONS: &[(&str, &str)] = &[
    ("corpus-tsv", "1"),
    ("score-sidecar", "jsonl-1"),
    ("langprofile", langid::PROFILE_VERSION),
    ("char-lm", "CLM1/1"),
    ("nbest", "jsonl-1"),
    ("manifest", "1"),
];
