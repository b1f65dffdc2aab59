use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Fock expansion lost too much norm at the requested cutoff.
    #[error(
        "Fock truncation leaked norm (retained {retained:.6}); use cutoff >= {required_cutoff}"
    )]
    Truncation {
        retained: f64,
        required_cutoff: usize,
    },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    /// Too many positive-P trajectories escaped; reduce the time step or `U`.
    #[error(
        "{diverged} of {total} trajectories diverged; try a smaller time step or Kerr strength"
    )]
    Divergence { diverged: usize, total: usize },

    #[error("training diverged: {0}")]
    TrainingDivergence(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
