use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty transcription")]
    EmptyTranscription,
    #[error("empty sequence")]
    EmptySequence,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid confusion kernel at row {row}: {reason}")]
    InvalidKernel { row: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated file")]
    Truncated,
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),
    #[error("malformed {what} at line {line}: {reason}")]
    Malformed { what: &'static str, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("zero-norm vector under cosine similarity")]
    ZeroNorm,
    #[error("count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("defunct microbatch: pivot has no positive companion")]
    DefunctMicrobatch,
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("item {index}: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no transcription class has two or more utterances")]
    NoMultiMemberClass,
    #[error("not enough utterances outside the pivot class")]
    NotEnoughNegatives,
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("empty index")]
    EmptyIndex,
    #[error("pair set has no positive pairs")]
    NoPositives,
    #[error("reference label {0:?} is absent from the phonebook")]
    LabelNotInPhonebook(String),

    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { key: String, line: usize },
    #[error("config line {line}: duplicate key {key:?}")]
    DuplicateKey { key: String, line: usize },
    #[error("invalid value for {key:?}: {reason}")]
    InvalidValue { key: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at(index: usize, source: Error) -> Self {
        Error::BatchItem { index, source: Box::new(source) }
    }

    /// Short stable identifier, used by the CLI for machine-parsable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyTranscription => "empty-transcription",
            Error::EmptySequence => "empty-sequence",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidKernel { .. } => "invalid-kernel",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::BadMagic { .. } => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::Truncated => "truncated",
            Error::DimensionOverflow(_) => "dimension-overflow",
            Error::Malformed { .. } => "malformed",
            Error::Io { .. } => "io",
            Error::NonFinite(_) => "non-finite",
            Error::ZeroNorm => "zero-norm",
            Error::CountMismatch { .. } => "count-mismatch",
            Error::DefunctMicrobatch => "defunct-microbatch",
            Error::NoForwardCache => "no-forward-cache",
            Error::BatchItem { source, .. } => source.kind(),
            Error::NoMultiMemberClass => "no-multi-member-class",
            Error::NotEnoughNegatives => "not-enough-negatives",
            Error::DuplicateId(_) => "duplicate-id",
            Error::UnknownLabel(_) => "unknown-label",
            Error::EmptyIndex => "empty-index",
            Error::NoPositives => "no-positives",
            Error::LabelNotInPhonebook(_) => "label-not-in-phonebook",
            Error::ConfigSyntax { .. } => "config-syntax",
            Error::UnknownKey { .. } => "unknown-key",
            Error::DuplicateKey { .. } => "duplicate-key",
            Error::InvalidValue { .. } => "invalid-value",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
