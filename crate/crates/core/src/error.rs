use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::RecordId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("i/o error: {0}")]
    Stream(#[from] io::Error),

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("aligned files differ in length: {source_lines} source lines vs {target_lines} target lines")]
    AlignmentMismatch { source_lines: usize, target_lines: usize },
    #[error("record {record_id} is missing score `{key}`")]
    MissingScore { record_id: RecordId, key: String },
    #[error("duplicate record id {0}")]
    DuplicateId(RecordId),
    #[error("non-finite value for score `{key}` on record {record_id}")]
    NonFiniteScore { record_id: RecordId, key: String },
    #[error("invalid JSON on line {line}: {reason}")]
    Json { line: usize, reason: String },

    #[error("training set contains no usable text")]
    EmptyTrainingSet,
    #[error("empty text")]
    EmptyText,
    #[error("character {0:?} is outside the model alphabet")]
    OutOfAlphabet(char),
    #[error("invalid n-gram order {0}")]
    InvalidOrder(usize),
    #[error("invalid model file: {0}")]
    BadModel(String),
    #[error("at least two language profiles are required, got {0}")]
    TooFewProfiles(usize),
    #[error("no profile loaded for language `{0}`")]
    UnknownLanguage(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),

    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("corpus of {size} records is too small for {k} folds")]
    CorpusTooSmall { size: usize, k: usize },
    #[error("fold {0} has no scores")]
    EmptyFold(usize),
    #[error("percentile {0} is outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("fold plan does not cover record {0}")]
    UnplannedRecord(RecordId),

    #[error("empty corpus")]
    EmptyCorpus,
    #[error("evaluation pair has no reference")]
    NoReferences,
    #[error("line counts differ: {hypotheses} hypotheses vs {references} references")]
    LineCountMismatch { hypotheses: usize, references: usize },

    #[error("n-best list {0} has no hypotheses")]
    EmptyHypotheses(RecordId),
    #[error("no reference for n-best list {0}")]
    MissingReference(RecordId),
    #[error("beam width must be positive")]
    InvalidWidth,

    #[error("empty source")]
    EmptySource,
    #[error("empty demonstration target")]
    EmptyTarget,
    #[error("empty query")]
    EmptyQuery,
    #[error("demonstration pool has {pool} entries, {requested} requested")]
    PoolTooSmall { pool: usize, requested: usize },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Stream(_) => "io",
            Error::MalformedLine { .. } => "malformed_line",
            Error::AlignmentMismatch { .. } => "alignment_mismatch",
            Error::MissingScore { .. } => "missing_score",
            Error::DuplicateId(_) => "duplicate_id",
            Error::NonFiniteScore { .. } => "non_finite_score",
            Error::Json { .. } => "json",
            Error::EmptyTrainingSet => "empty_training_set",
            Error::EmptyText => "empty_text",
            Error::OutOfAlphabet(_) => "out_of_alphabet",
            Error::InvalidOrder(_) => "invalid_order",
            Error::BadModel(_) => "bad_model",
            Error::TooFewProfiles(_) => "too_few_profiles",
            Error::UnknownLanguage(_) => "unknown_language",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidFoldCount(_) => "invalid_fold_count",
            Error::CorpusTooSmall { .. } => "corpus_too_small",
            Error::EmptyFold(_) => "empty_fold",
            Error::InvalidPercentile(_) => "invalid_percentile",
            Error::UnplannedRecord(_) => "unplanned_record",
            Error::EmptyCorpus => "empty_corpus",
            Error::NoReferences => "no_references",
            Error::LineCountMismatch { .. } => "line_count_mismatch",
            Error::EmptyHypotheses(_) => "empty_hypotheses",
            Error::MissingReference(_) => "missing_reference",
            Error::InvalidWidth => "invalid_width",
            Error::EmptySource => "empty_source",
            Error::EmptyTarget => "empty_target",
            Error::EmptyQuery => "empty_query",
            Error::PoolTooSmall { .. } => "pool_too_small",
            Error::Config(_) => "config",
        }
    }
}
