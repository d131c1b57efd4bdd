use std::path::PathBuf;

use curvgnn_autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("point is not on the {kind} manifold: {detail}")]
    OffManifold { kind: &'static str, detail: String },

    #[error("logarithm undefined between antipodal sphere points")]
    UndefinedLog,

    #[error("numerical singularity: {0}")]
    Singularity(String),

    #[error("stereographic vector of norm {0} lies outside the unit ball")]
    OutOfModel(f64),

    #[error("sphere point coincides with the projection pole")]
    ProjectionPole,

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("negative sampling error: {0}")]
    Sampling(String),

    #[error("infeasible clustering: {0}")]
    Infeasible(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.into(), message: err.to_string() }
    }
}
