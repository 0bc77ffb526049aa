use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spline fit failed: {0}")]
    Fit(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("contour covers {covered} of {requested} sampling lines (need at least 2)")]
    InsufficientSpan { covered: usize, requested: usize },

    #[error("cannot place {n} points {min_dist} px apart on a span of {span} px")]
    InfeasibleSpacing { n: usize, min_dist: f64, span: f64 },

    #[error("train-mode batch normalization needs a batch of at least 2, got {0}")]
    DegenerateBatch(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {msg}")]
    Malformed { path: PathBuf, msg: String },

    #[error("{path}: unsupported format: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },

    #[error("{path}: not a checkpoint (bad magic)")]
    NotACheckpoint { path: PathBuf },

    #[error("{path}: unsupported checkpoint version {found} (this build reads version {expected})")]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: corrupt checkpoint at byte offset {offset}: {msg}")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        msg: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
