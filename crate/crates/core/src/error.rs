use std::path::PathBuf;

use crate::model::{Atom, ChunkId, VarId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown chunk {0}")]
    UnknownChunk(ChunkId),
    #[error("unknown variable {0}")]
    UnknownVariable(VarId),
    #[error("atom {0} is not part of the alphabet")]
    UnknownAtom(Atom),
    #[error("a chunk needs at least one term")]
    EmptyChunk,
    #[error("a lone variable reference is not a chunk")]
    BareVariable,
    #[error("chunk with these terms already exists as {0}")]
    DuplicateChunk(ChunkId),
    #[error("a variable needs at least two distinct denotees, got {0}")]
    TooFewDenotees(usize),
    #[error("denotee list and count list differ in length ({denotees} vs {counts})")]
    DenoteeCountMismatch { denotees: usize, counts: usize },
    #[error("variable resolution is cyclic through {0}")]
    Cycle(VarId),
    #[error("atom {0} has no single-term chunk, the inventory is incomplete")]
    Incomplete(Atom),
    #[error("counts must be finite and nonnegative")]
    NegativeCount,
    #[error("all requested marginal counts are zero")]
    DegenerateDistribution,
    #[error("probabilities sum to {0}, expected 1")]
    InvalidDistribution(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no chunk is consistent with the sequence at position {0}")]
    CompletenessViolation(usize),
    #[error("unsupported model version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("need {needed} symbols but only {available} are available")]
    InsufficientData { needed: usize, available: usize },
    #[error("malformed integer sequence at token {index}: {token:?}")]
    MalformedSequence { index: usize, token: String },
    #[error("malformed LZ78 token {index}: {reason}")]
    MalformedToken { index: usize, reason: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownChunk(_) | Error::UnknownVariable(_) | Error::UnknownAtom(_) => "invalid-reference",
            Error::EmptyChunk | Error::BareVariable => "invalid-chunk",
            Error::DuplicateChunk(_) => "already-present",
            Error::TooFewDenotees(_) | Error::DenoteeCountMismatch { .. } => "invalid-variable",
            Error::Cycle(_) => "cycle",
            Error::Incomplete(_) | Error::CompletenessViolation(_) => "completeness-violation",
            Error::NegativeCount => "invalid-count",
            Error::DegenerateDistribution => "degenerate-distribution",
            Error::InvalidDistribution(_) => "invalid-distribution",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Version { .. } => "version-mismatch",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::MalformedSequence { .. } | Error::MalformedToken { .. } => "parse-error",
            Error::Io { .. } => "io",
            Error::Json(_) => "parse-error",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
