use thiserror::Error;

/// Errors produced by the geometry, labeling, loss and training routines.
#[derive(Debug, Error)]
pub enum OcuError {
    /// An argument violated a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Similarity estimation could not produce a unique transform.
    #[error("estimation failed: {0}")]
    Estimation(String),
    /// A 3x4 matrix is not a positive-scale similarity.
    #[error("cannot decompose transform: {0}")]
    Decomposition(String),
    /// Template fitting to iris landmarks failed.
    #[error("eyeball fit failed: {0}")]
    Fit(String),
    /// A direction or sum of directions has (near) zero length.
    #[error("degenerate direction: {0}")]
    Degenerate(String),
    /// Training diverged or was misconfigured.
    #[error("training error: {0}")]
    Training(String),
    /// Malformed input document.
    #[error("data error at line {line}, field `{field}`: {message}")]
    Data {
        line: usize,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OcuError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        OcuError::Parameter(msg.into())
    }

    pub(crate) fn data(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        OcuError::Data {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = OcuError> = std::result::Result<T, E>;
