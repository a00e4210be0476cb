use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset at {root} contains no decodable images")]
    EmptyDataset { root: PathBuf },

    #[error("dataset root {0} is not a directory")]
    NotADirectory(PathBuf),

    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),

    #[error("failed to decode {path}: {reason}")]
    DecodeFailure { path: PathBuf, reason: String },

    #[error("failed to write {path}: {reason}")]
    WriteFailure { path: PathBuf, reason: String },

    #[error("combination count exceeds {bits}-bit range: {what}")]
    Overflow { what: String, bits: u32 },

    #[error("rank {rank} out of range for a space of size {size}")]
    RankOutOfRange { rank: String, size: String },

    #[error("malformed combination tuple: {0}")]
    MalformedTuple(String),

    #[error("cannot draw {count} distinct ranks from a space of size {size}")]
    CountExceedsSpace { count: String, size: String },

    #[error("selection policy {0} requires a similarity matrix")]
    PolicyMissingSimilarity(&'static str),

    #[error("invalid selection policy: {0}")]
    InvalidPolicy(String),

    #[error("similarity matrix for class {class:?} refused: {n} images exceeds limit {limit}")]
    SimilarityTooLarge { class: String, n: usize, limit: usize },

    #[error("expected {expected} members for the layout, got {actual}")]
    MemberCountMismatch { expected: usize, actual: usize },

    #[error("class {class:?} with {n} images cannot form any composite of {k} images")]
    DegenerateClass { class: String, n: usize, k: usize },

    #[error("override target {0} exceeds count arithmetic range")]
    OverrideTooLarge(String),

    #[error("plan has {records} records, above the generation limit {limit}")]
    PlanTooLarge { records: String, limit: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("verification failed with {} violation(s)", .0.len())]
    VerificationFailed(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDataset { .. } => "EmptyDataset",
            Error::NotADirectory(_) => "NotADirectory",
            Error::DuplicateClass(_) => "DuplicateClass",
            Error::DecodeFailure { .. } => "DecodeFailure",
            Error::WriteFailure { .. } => "WriteFailure",
            Error::Overflow { .. } => "Overflow",
            Error::RankOutOfRange { .. } => "RankOutOfRange",
            Error::MalformedTuple(_) => "MalformedTuple",
            Error::CountExceedsSpace { .. } => "CountExceedsSpace",
            Error::PolicyMissingSimilarity(_) => "PolicyMissingSimilarity",
            Error::InvalidPolicy(_) => "InvalidPolicy",
            Error::SimilarityTooLarge { .. } => "SimilarityTooLarge",
            Error::MemberCountMismatch { .. } => "MemberCountMismatch",
            Error::DegenerateClass { .. } => "DegenerateClass",
            Error::OverrideTooLarge(_) => "OverrideTooLarge",
            Error::PlanTooLarge { .. } => "PlanTooLarge",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::VerificationFailed(_) => "VerificationFailed",
            Error::Io { .. } => "Io",
            Error::Json { .. } => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
