use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown builtin string `{0}`")]
    UnknownBuiltin(String),

    #[error(
        "no convergence at lambda = {lambda:e}: bracket [{lo:e}, {hi:e}] at truncation {truncation:e} ({reason})"
    )]
    Convergence {
        lambda: f64,
        lo: f64,
        hi: f64,
        truncation: f64,
        reason: String,
    },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Domain(_) | Error::UnknownBuiltin(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
