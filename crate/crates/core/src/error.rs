use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants split into two families: precondition failures (bad shapes,
/// invalid parameters, violated assumptions) and numerical failures
/// (factorizations, non-convergence, singular updates). The CLI maps them
/// to different exit codes through [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("factorization of {what} failed (min eigenvalue {min_eigenvalue:e})")]
    Factorization {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("singular rank-1 update in {what}: denominator {denominator:e}")]
    Singular {
        what: &'static str,
        denominator: f64,
    },

    #[error(
        "fixed point did not converge after {iterations} iterations \
         (alpha = {alpha}, gamma = {gamma}, residual = {residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        alpha: f64,
        gamma: f64,
        residual: f64,
    },

    #[error("self-consistent xi equation has no positive solution (c4 * T_sigma = {c4_t_sigma})")]
    Unstable { c4_t_sigma: f64 },

    #[error("no root of gamma(tA)/t = 1 found: {0}")]
    NoRoot(String),

    #[error("observation {index} is degenerate: leave-one-out denominator {denominator:e}")]
    DegenerateObservation { index: usize, denominator: f64 },

    #[error("groups are indistinguishable along the discriminant direction (mu2(d) - mu1(d) = {gap:e})")]
    IndistinguishableGroups { gap: f64 },

    #[error("distribution pair does not share a covariance (max entrywise difference {max_diff:e})")]
    CovarianceMismatch { max_diff: f64 },

    #[error("moment bound of order {0} is missing")]
    MissingMoment(u32),

    #[error("polynomial tail with exponent {b} cannot bound a moment of order {k} (need b > k + 1)")]
    InfeasibleBound { k: u32, b: f64 },

    #[error("density does not integrate to one (integral = {integral})")]
    Unnormalized { integral: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Factorization { .. }
                | Error::Singular { .. }
                | Error::NonConvergence { .. }
                | Error::Unstable { .. }
                | Error::NoRoot(_)
                | Error::DegenerateObservation { .. }
                | Error::IndistinguishableGroups { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
