//! Matern covariance, Gaussian-process realization sampling,
//! maximum-likelihood parameter fitting, and the ordinary Kriging predictor.

mod fit;
mod kriging;

pub use fit::fit_matern_ml;
pub use kriging::KrigingModel;

use crate::basis::Location;
use crate::numerics::{bessel_k1, cholesky, LinalgError, RandomState, SpdMatrix, JITTER_SCHEDULE};
use serde::{Deserialize, Serialize};

/// Matern covariance parameters at smoothness one.
///
/// `kappa = sqrt(8) / rho` is derived, never stored, so the invariant holds
/// by construction. `nu` is carried for completeness but the covariance is
/// specialized to `nu = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    /// Marginal variance (signal units squared).
    pub sigma2: f64,
    /// Smoothness; fixed at 1.0 throughout this study.
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Spatial range in unit-square distance.
    pub rho: f64,
    /// Nugget variance (signal units squared).
    pub tau2: f64,
}

fn default_nu() -> f64 {
    1.0
}

impl MaternParams {
    pub fn new(sigma2: f64, rho: f64, tau2: f64) -> Self {
        Self {
            sigma2,
            nu: 1.0,
            rho,
            tau2,
        }
    }

    /// `kappa = sqrt(8) / rho`.
    pub fn kappa(&self) -> f64 {
        8.0f64.sqrt() / self.rho
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.sigma2 > 0.0) || !(self.rho > 0.0) || !(self.tau2 >= 0.0) {
            return Err(GpError::BadParams(*self));
        }
        if self.nu != 1.0 {
            return Err(GpError::UnsupportedSmoothness(self.nu));
        }
        Ok(())
    }
}

impl Default for MaternParams {
    /// The simulation-study parameters: unit variance, range 0.2,
    /// nugget variance 0.01.
    fn default() -> Self {
        Self::new(1.0, 0.2, 0.01)
    }
}

/// Errors from covariance evaluation, sampling, fitting, and prediction.
#[derive(Debug)]
pub enum GpError {
    BadParams(MaternParams),
    UnsupportedSmoothness(f64),
    /// Fewer observations than the fit requires.
    TooFewObservations { needed: usize, got: usize },
    /// No Nelder-Mead start converged within the iteration budget.
    FitFailed { starts_tried: usize },
    DimensionMismatch { expected: usize, got: usize },
    Linalg(LinalgError),
}

impl std::fmt::Display for GpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadParams(p) => write!(
                f,
                "invalid Matern parameters: sigma2={} rho={} tau2={}",
                p.sigma2, p.rho, p.tau2
            ),
            Self::UnsupportedSmoothness(nu) => {
                write!(f, "covariance is specialized to nu=1 (got nu={nu})")
            }
            Self::TooFewObservations { needed, got } => {
                write!(f, "need at least {needed} observations, got {got}")
            }
            Self::FitFailed { starts_tried } => {
                write!(f, "likelihood fit failed to converge from {starts_tried} starts")
            }
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::Linalg(e) => write!(f, "linear algebra failure: {e}"),
        }
    }
}

impl std::error::Error for GpError {}

impl From<LinalgError> for GpError {
    fn from(e: LinalgError) -> Self {
        Self::Linalg(e)
    }
}

/// Beyond this scaled distance `x K1(x)` is below 5e-15; the covariance is
/// treated as exactly zero, which also spares the Bessel evaluation.
const FAR_FIELD_CUTOFF: f64 = 35.0;

/// Matern covariance at distance `d` with `nu = 1`:
/// `C(d) = sigma2 * (kappa d) * K1(kappa d)`, and `C(0) = sigma2` by the
/// analytic limit (handled as an explicit special case).
pub fn matern_cov(d: f64, p: &MaternParams) -> f64 {
    debug_assert!(d >= 0.0);
    debug_assert_eq!(p.nu, 1.0);
    if d == 0.0 {
        return p.sigma2;
    }
    let x = p.kappa() * d;
    if x > FAR_FIELD_CUTOFF {
        return 0.0;
    }
    match bessel_k1(x) {
        Ok(k1) => p.sigma2 * x * k1,
        Err(_) => p.sigma2, // unreachable for d > 0
    }
}

/// Covariance matrix over a location set; `tau2` is added on the diagonal
/// when `include_nugget` is set.
pub fn cov_matrix(locs: &[Location], p: &MaternParams, include_nugget: bool) -> SpdMatrix {
    let nugget = if include_nugget { p.tau2 } else { 0.0 };
    SpdMatrix::from_fn(locs.len(), |i, j| {
        if i == j {
            p.sigma2 + nugget
        } else {
            matern_cov(locs[i].distance(&locs[j]), p)
        }
    })
}

/// Draws one realization at `locs`: `signal = L z` from the nugget-free
/// covariance factor, then `observed = signal + sqrt(tau2) * noise`.
///
/// Draw order is fixed: the `n` field normals first, then the `n` noise
/// normals, so a seed fully determines both vectors.
pub fn sample_gp(
    locs: &[Location],
    p: &MaternParams,
    state: &mut RandomState,
) -> Result<(Vec<f64>, Vec<f64>), GpError> {
    p.validate()?;
    let c = cov_matrix(locs, p, false);
    let factor = cholesky(&c, &JITTER_SCHEDULE)?;
    let z: Vec<f64> = (0..locs.len()).map(|_| state.next_standard_normal()).collect();
    let signal = factor.lower_mul(&z)?;
    let sd = p.tau2.sqrt();
    let observed: Vec<f64> = signal
        .iter()
        .map(|&s| s + sd * state.next_standard_normal())
        .collect();
    Ok((signal, observed))
}
