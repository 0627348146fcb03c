use std::fmt;

/// Errors produced while building models or evaluating numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Dimension mismatch between vectors/matrices supplied by the caller.
    DimensionMismatch { expected: usize, found: usize, what: &'static str },
    /// A covariance matrix failed the positive-definiteness check.
    NotPositiveDefinite { eigenvalue: f64 },
    /// A matrix that should be symmetric is not, within tolerance.
    NotSymmetric { max_asymmetry: f64 },
    /// An invalid scalar parameter (non-finite, out of range, ...).
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    /// A moment or integral does not exist for the requested generator.
    MomentDoesNotExist { what: String },
    /// A numerical integral failed to converge or produced a non-finite value.
    IntegrationFailure { what: String },
    /// Operation requires the normal generator kind.
    UnsupportedGenerator { op: &'static str },
    /// The tabulated generator grid is not strictly increasing in t.
    NonMonotoneGrid,
    /// Rejection sampling exhausted its budget; carries what was drawn.
    SamplingBudgetExhausted { requested: usize, drawn: usize },
    /// The h1(rho) denominator vanished in the zero-correlation solve.
    SingularConfiguration { rho: f64 },
    /// A data row violates the truncation support.
    DataOutOfSupport { row: usize },
    /// An optimizer failed to converge from every start.
    NonConvergence { best_loglik: f64 },
    /// Malformed input file (CSV or JSON).
    Parse { line: usize, message: String },
    /// Verification preconditions (e.g. generator regularity) not met.
    HypothesesNotMet { reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found, what } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, found {found}")
            }
            Error::NotPositiveDefinite { eigenvalue } => {
                write!(f, "matrix is not positive definite: eigenvalue {eigenvalue}")
            }
            Error::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix is not symmetric: max |A - A'| = {max_asymmetry}")
            }
            Error::InvalidParameter { name, value, reason } => {
                write!(f, "invalid parameter {name} = {value}: {reason}")
            }
            Error::MomentDoesNotExist { what } => write!(f, "moment does not exist: {what}"),
            Error::IntegrationFailure { what } => write!(f, "integration failure: {what}"),
            Error::UnsupportedGenerator { op } => {
                write!(f, "{op} requires the normal generator kind")
            }
            Error::NonMonotoneGrid => write!(f, "tabulated generator grid must be strictly increasing"),
            Error::SamplingBudgetExhausted { requested, drawn } => {
                write!(f, "sampling budget exhausted: drew {drawn} of {requested}")
            }
            Error::SingularConfiguration { rho } => {
                write!(f, "h1({rho}) = 0: zero-correlation equation is singular")
            }
            Error::DataOutOfSupport { row } => {
                write!(f, "data row {row} lies below the truncation point")
            }
            Error::NonConvergence { best_loglik } => {
                write!(f, "optimizer failed to converge; best log-likelihood {best_loglik}")
            }
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::HypothesesNotMet { reason } => write!(f, "hypotheses not met: {reason}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
