//! Shared numerical machinery: deterministic random number generation, dense
//! symmetric-positive-definite linear algebra, the modified Bessel function
//! of the second kind `K1`, and finite-difference utilities.

pub mod bessel;
pub mod finitediff;
pub mod linalg;
pub mod rng;

pub use bessel::bessel_k1;
pub use finitediff::finite_diff_gradient;
pub use linalg::{cholesky, LinalgError, LowerTriangularFactor, SpdMatrix, JITTER_SCHEDULE};
pub use rng::RandomState;

/// Errors raised by scalar numerical routines.
#[derive(Clone, Debug, PartialEq)]
pub enum NumericsError {
    /// Argument outside the mathematical domain of the function.
    Domain { what: &'static str, value: f64 },
}

impl std::fmt::Display for NumericsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Domain { what, value } => {
                write!(f, "domain error: {what} (got {value})")
            }
        }
    }
}

impl std::error::Error for NumericsError {}
