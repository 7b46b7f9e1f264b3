use thiserror::Error;

/// Errors raised anywhere in the design flow.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-positive duration at line {line}")]
    NonPositiveDuration { line: usize },

    #[error("{kind} id {id} out of range 1..={max} at line {line}")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        max: usize,
        line: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("instance dimensions inconsistent: {0}")]
    Dimension(String),

    #[error("too many targets for the solver: {0} (maximum is 32)")]
    TooManyTargets(usize),

    /// `target` and `window` are 0-based; the message shows the target 1-based.
    #[error("bandwidth-infeasible target t{} in window {window}", .target + 1)]
    BandwidthInfeasible { target: usize, window: usize },

    #[error("solver limit reached before any feasible binding was found")]
    LimitReached,

    #[error("no feasible binding on {0} buses")]
    Infeasible(usize),

    #[error("binding does not cover target t{}", .0 + 1)]
    MissingTarget(usize),

    #[error("unknown preset '{0}' (expected mat2like, uniform or hotspot)")]
    UnknownPreset(String),

    #[error("random binding sampling failed after {0} rejections")]
    SamplingFailed(u64),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
