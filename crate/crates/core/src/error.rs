use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("dimension {dim} has no observed values; drop it (remove_zero_variance) before calling this")]
    EmptyDimension { dim: usize },

    #[error("no dimension with non-zero variance remains")]
    NoDimensionsLeft,

    #[error("observed covariance of component {component} is not positive definite for missingness pattern {pattern}")]
    Numerical { component: usize, pattern: String },

    #[error("component {component} has total responsibility {mass:e}, below the degeneracy threshold")]
    DegenerateComponent { component: usize, mass: f64 },

    #[error("EM iteration {iteration}: {source}")]
    Em {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every ensemble member failed to fit")]
    EmptyEnsemble,

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    #[error("method {method} failed on run {run} at p_m = {p_m}: {source}")]
    Experiment {
        method: String,
        run: usize,
        p_m: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
}
