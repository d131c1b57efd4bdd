use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("domain violation in `{op}`: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value while perturbing parameter {param} at flat index {index}")]
    NonFinite { param: usize, index: usize },

    #[error("variable refers to a cleared tape or to a different tape")]
    StaleVar,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape { op, detail: detail.into() }
}

pub(crate) fn domain_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Domain { op, detail: detail.into() }
}
