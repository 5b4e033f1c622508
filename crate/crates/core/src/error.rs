use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("point at depth {depth} is behind the camera")]
    BehindCamera { depth: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("energy is undefined: no landmarks and no visible photometric samples")]
    UndefinedEnergy,

    #[error("zero pivot at row {row}")]
    ZeroPivot { row: usize },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("under-constrained system: {0}")]
    UnderConstrained(String),

    #[error("region of interest out of bounds: {0}")]
    RoiOutOfBounds(String),

    #[error("training data has zero variance")]
    ZeroVariance,

    #[error("unknown phoneme '{phoneme}' at position {position}")]
    UnknownPhoneme { phoneme: String, position: usize },

    #[error("unsatisfiable query: no sample with viseme '{symbol}'")]
    Unsatisfiable { symbol: char },

    #[error("transition table has no entry for pair ({a}, {b})")]
    MissingTransition { a: u32, b: u32 },

    #[error("{what} at byte offset {offset}")]
    Format { what: String, offset: u64 },

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable short tag for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Invalid(_) => "invalid_input",
            Error::Infeasible(_) => "infeasible",
            Error::BehindCamera { .. } => "behind_camera",
            Error::Degenerate(_) => "degenerate",
            Error::UndefinedEnergy => "undefined_energy",
            Error::ZeroPivot { .. } => "zero_pivot",
            Error::NotConverged { .. } => "not_converged",
            Error::UnderConstrained(_) => "under_constrained",
            Error::RoiOutOfBounds(_) => "roi_out_of_bounds",
            Error::ZeroVariance => "zero_variance",
            Error::UnknownPhoneme { .. } => "unknown_phoneme",
            Error::Unsatisfiable { .. } => "unsatisfiable_query",
            Error::MissingTransition { .. } => "missing_transition",
            Error::Format { .. } => "format",
            Error::Frame { source, .. } | Error::Stage { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }

    pub(crate) fn at_frame(self, index: usize) -> Error {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Error {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, offset: u64) -> Error {
        Error::Format {
            what: what.into(),
            offset,
        }
    }
}
