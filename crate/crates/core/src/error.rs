use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two points that must be distinct coincide (dipole on an electrode).
    #[error("singularity: {0}")]
    Singular(String),

    #[error("numerical failure{}: {reason}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numerical { step: Option<usize>, reason: String },

    #[error("config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical { step: None, reason: msg.into() }
    }

    /// Attach a time-step index to a numerical failure that does not carry one yet.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numerical { step: None, reason } => Error::Numerical { step: Some(step), reason },
            other => other,
        }
    }
}
