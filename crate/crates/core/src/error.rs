use std::fmt;

/// Errors produced by density construction, quadrature and the verification
/// harness.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A grid density with zero total mass cannot be normalized.
    AllZero,
    /// A NaN or infinity appeared where a finite value was required.
    NonFinite(&'static str),
    /// Grid axes cover fewer standard deviations than required for a
    /// faithful Gaussian discretization.
    DomainTooSmall { coverage: f64, required: f64 },
    /// `marginalize` was called with an empty set of block indices.
    EmptyKeep,
    /// The requested operation is not available for this backend or size.
    Unsupported(String),
    /// Block scaling factors must be strictly positive.
    NonPositiveLambda,
    /// Gaussian convolution requires a strictly positive variance.
    NonPositiveS,
    /// The Ornstein-Uhlenbeck semigroup is only defined for t >= 0.
    NegativeTime,
    /// The covariance matrix is not symmetric positive definite.
    SingularCovariance,
    /// The Fisher information matrix is too ill-conditioned to invert.
    SingularFisherMatrix,
    /// The flow integrand grows toward the truncation time, so the tail of
    /// the remainder integral cannot be bounded.
    TailNotDecaying { first: f64, last: f64 },
    /// The region where the density exceeds its floor is too small for a
    /// meaningful mixed-partials sweep.
    CoreTooSmall { fraction: f64 },
    /// A precondition on the inputs was violated.
    InvalidInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::AllZero => write!(f, "grid density has zero total mass"),
            Error::NonFinite(what) => write!(f, "non-finite value encountered in {what}"),
            Error::DomainTooSmall { coverage, required } => write!(
                f,
                "grid covers only {coverage:.2} standard deviations, {required:.0} required"
            ),
            Error::EmptyKeep => write!(f, "marginalization requires a nonempty set of blocks"),
            Error::Unsupported(what) => write!(f, "unsupported operation: {what}"),
            Error::NonPositiveLambda => write!(f, "block scaling factors must be positive"),
            Error::NonPositiveS => write!(f, "convolution variance must be positive"),
            Error::NegativeTime => write!(f, "flow time must be nonnegative"),
            Error::SingularCovariance => {
                write!(f, "covariance matrix is not symmetric positive definite")
            }
            Error::SingularFisherMatrix => {
                write!(f, "Fisher information matrix is singular or ill-conditioned")
            }
            Error::TailNotDecaying { first, last } => write!(
                f,
                "flow integrand does not decay: |first| = {first:.3e}, |last| = {last:.3e}"
            ),
            Error::CoreTooSmall { fraction } => write!(
                f,
                "density core covers only {:.1}% of the grid",
                fraction * 100.0
            ),
            Error::InvalidInput(what) => write!(f, "invalid input: {what}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
