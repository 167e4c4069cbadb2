//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone)]
pub enum Error {
    /// A physical parameter is outside its allowed domain.
    InvalidParameter(String),
    /// A closed-form expression hit a vanishing denominator.
    SingularFormula { denominator: String },
    /// The drift matrix is numerically singular; carries a condition estimate
    /// (`f64::INFINITY` when a pivot vanished exactly).
    SingularSystem { condition: f64 },
    /// Trajectory is already too close to stationary to fit a decay rate.
    InsufficientDecay(String),
    /// Fock cutoff too small for the requested thermal state.
    CutoffTooSmall { required: usize },
    /// Hilbert-space dimension exceeds the configured budget.
    DimensionBudget { dim: usize, budget: usize },
    /// Adaptive integrator step size underflowed.
    Stiffness(String),
    /// Operation requires a model feature that is absent.
    InvalidModel(String),
    /// A density matrix failed an integrity check.
    Integrity(String),
    /// Configuration file or flag-set problem.
    Config(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::SingularFormula { denominator } => {
                write!(f, "singular formula: denominator {denominator} vanishes")
            }
            Error::SingularSystem { condition } => {
                write!(f, "singular drift system (condition estimate {condition:.3e})")
            }
            Error::InsufficientDecay(msg) => write!(f, "insufficient decay: {msg}"),
            Error::CutoffTooSmall { required } => {
                write!(f, "phonon cutoff too small: need N_b >= {required} for the requested tail mass")
            }
            Error::DimensionBudget { dim, budget } => {
                write!(f, "Hilbert-space dimension {dim} exceeds budget {budget}")
            }
            Error::Stiffness(msg) => write!(
                f,
                "integrator step underflow ({msg}); reduce cutoffs or shorten the time horizon"
            ),
            Error::InvalidModel(msg) => write!(f, "invalid model: {msg}"),
            Error::Integrity(msg) => write!(f, "density-matrix integrity violation: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// CLI exit code: 1 for usage/config problems, 2 for domain errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
