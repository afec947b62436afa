use thiserror::Error;

/// Errors produced by the geometry, quadrature and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("resource error: {what} (required {required}, budget {budget})")]
    Resource {
        what: String,
        required: usize,
        budget: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("numeric error: {message}")]
    Numeric {
        message: String,
        /// Residual or bracket history leading up to the failure.
        history: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, history: Vec<f64>) -> Self {
        Error::Numeric {
            message: msg.into(),
            history,
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Input(_)
            | Error::Geometry(_)
            | Error::Format(_)
            | Error::Unsupported(_)
            | Error::Construction(_)
            | Error::Json(_) => ErrorKind::Validation,
            Error::Resource { .. } | Error::Io(_) => ErrorKind::Resource,
            Error::Integration(_)
            | Error::Evaluation(_)
            | Error::Sampling(_)
            | Error::Numeric { .. } => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Resource,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
