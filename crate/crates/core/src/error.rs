use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a model invariant (non-positive rate, infeasible
    /// state, inconsistent population size, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The fixed-step integrator left the probability simplex.
    #[error("integration error: {0}")]
    Integration(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// `true` for errors caused by bad user input rather than by the
    /// environment.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Integration(_) | Error::UnknownExperiment(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
