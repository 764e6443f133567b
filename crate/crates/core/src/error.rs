use thiserror::Error;

use crate::information::Design;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model evaluation produced a non-finite value.
    #[error("{variant}: eta is not finite at t = {t}")]
    Domain { variant: &'static str, t: f64 },

    #[error(
        "mean response overflows at t = {t} (log mean {log_mean:.3}); evaluate the criterion in the log domain instead"
    )]
    Overflow { t: f64, log_mean: f64 },

    /// Input violates a documented precondition. `field` names the offender.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("time point {t} is not on the unstructured model's grid")]
    OffGrid { t: f64 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error(
        "equivalence certificate needs rho = 0 or an intercept; use grid verification instead"
    )]
    NotCertifiable,

    #[error("local probe improved the criterion by {gain:.3e}; better design {better:?}")]
    ProbeImprovement { better: Design, gain: f64 },

    #[error("{0}")]
    Io(String),

    #[error("too few replicates: need at least {needed}, got {got}")]
    TooFewReplicates { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
