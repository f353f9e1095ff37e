//! Dense symmetric-positive-definite linear algebra.
//!
//! Covariance matrices over a few thousand near-gridded locations are
//! borderline conditioned, so factorization escalates through a fixed jitter
//! schedule instead of failing outright. Factorization and the multi
//! right-hand-side solves are blocked so the bulk of the work runs through
//! `general_mat_mul`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

/// Relative asymmetry tolerated by [`SpdMatrix::new`].
const SYMMETRY_TOL: f64 = 1e-12;

/// Block size for the factorization and multi-RHS solves.
const BLOCK: usize = 96;

/// Jitter escalation schedule applied when a factorization attempt fails.
pub const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Errors from the dense SPD routines.
#[derive(Clone, Debug, PartialEq)]
pub enum LinalgError {
    /// Input matrix is not square or not symmetric within tolerance.
    NotSymmetric { max_relative_asymmetry: f64 },
    /// Every jitter in the schedule failed to produce a positive definite
    /// factorization; the covariance configuration is bad.
    NotPositiveDefinite { order: usize, last_jitter: f64 },
    /// Vector or matrix dimensions do not match the factor.
    DimensionMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for LinalgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NotSymmetric {
                max_relative_asymmetry,
            } => write!(
                f,
                "matrix is not symmetric (max relative asymmetry {max_relative_asymmetry:e})"
            ),
            Self::NotPositiveDefinite { order, last_jitter } => write!(
                f,
                "matrix of order {order} is not positive definite even with jitter {last_jitter:e}"
            ),
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

/// Dense symmetric matrix intended to be positive definite.
///
/// Symmetry is validated on construction; definiteness is not — violations
/// surface as [`LinalgError::NotPositiveDefinite`] from [`cholesky`].
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    data: Array2<f64>,
}

impl SpdMatrix {
    /// Wraps a square matrix, checking symmetry to within `1e-12` relative
    /// to the largest entry magnitude.
    pub fn new(data: Array2<f64>) -> Result<Self, LinalgError> {
        let n = data.nrows();
        if data.ncols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: data.ncols(),
            });
        }
        let scale = data.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut max_asym = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                max_asym = max_asym.max((data[[i, j]] - data[[j, i]]).abs());
            }
        }
        let rel = max_asym / scale;
        if rel > SYMMETRY_TOL {
            return Err(LinalgError::NotSymmetric {
                max_relative_asymmetry: rel,
            });
        }
        Ok(Self { data })
    }

    /// Builds a symmetric matrix by evaluating `f(i, j)` for `i <= j` and
    /// mirroring, so symmetry holds by construction.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[[i, j]] = v;
                data[[j, i]] = v;
            }
        }
        Self { data }
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }
}

/// Lower-triangular Cholesky factor `L` with the jitter that was applied,
/// so `L Lt = A + jitter * I`.
#[derive(Clone, Debug)]
pub struct LowerTriangularFactor {
    l: Array2<f64>,
    jitter: f64,
}

impl LowerTriangularFactor {
    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    /// Jitter that was added to the diagonal before factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    /// `log det (L Lt) = 2 sum ln L[i,i]`.
    pub fn log_det(&self) -> f64 {
        (0..self.order()).map(|i| self.l[[i, i]].ln()).sum::<f64>() * 2.0
    }

    /// Solves `(L Lt) x = b` by forward then back substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.order();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.forward_sub(&mut x);
        self.backward_sub(&mut x);
        Ok(x)
    }

    /// `L z = b` in place.
    fn forward_sub(&self, b: &mut [f64]) {
        let n = self.order();
        for i in 0..n {
            let row = self.l.row(i);
            let row = row.as_slice().expect("factor rows are contiguous");
            let dot: f64 = row[..i].iter().zip(b[..i].iter()).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - dot) / row[i];
        }
    }

    /// `Lt x = z` in place, column-oriented so the inner update runs over a
    /// contiguous row of `L`.
    fn backward_sub(&self, b: &mut [f64]) {
        let n = self.order();
        for j in (0..n).rev() {
            let row = self.l.row(j);
            let row = row.as_slice().expect("factor rows are contiguous");
            let xj = b[j] / row[j];
            b[j] = xj;
            for i in 0..j {
                b[i] -= xj * row[i];
            }
        }
    }

    /// Solves `L Y = B` in place for many right-hand sides (blocked; the
    /// off-diagonal updates run through `general_mat_mul`).
    pub fn solve_lower_multi(&self, b: &mut Array2<f64>) -> Result<(), LinalgError> {
        let n = self.order();
        if b.nrows() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.nrows(),
            });
        }
        let mut i0 = 0;
        while i0 < n {
            let ib = BLOCK.min(n - i0);
            if i0 > 0 {
                let (done, mut rest) = b.view_mut().split_at(Axis(0), i0);
                let l_block = self.l.slice(s![i0..i0 + ib, 0..i0]);
                let mut target = rest.slice_mut(s![0..ib, ..]);
                general_mat_mul(-1.0, &l_block, &done.view(), 1.0, &mut target);
            }
            for j in 0..ib {
                let gj = i0 + j;
                let (head, mut tail) = b.view_mut().split_at(Axis(0), gj);
                let mut row = tail.row_mut(0);
                for t in i0..gj {
                    let c = self.l[[gj, t]];
                    if c != 0.0 {
                        row.scaled_add(-c, &head.row(t));
                    }
                }
                let d = self.l[[gj, gj]];
                row.mapv_inplace(|x| x / d);
            }
            i0 += ib;
        }
        Ok(())
    }

    /// Lower-triangular product `L z` (used to color standard normal draws).
    pub fn lower_mul(&self, z: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.order();
        if z.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: z.len(),
            });
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = self.l.row(i);
            let row = row.as_slice().expect("factor rows are contiguous");
            out[i] = row[..=i].iter().zip(z[..=i].iter()).map(|(a, x)| a * x).sum();
        }
        Ok(out)
    }
}

/// Cholesky factorization with jitter escalation.
///
/// Tries each `delta` in `schedule` in order, factoring `a + delta * I`; the
/// first success is returned with the jitter recorded. All jitters failing
/// signals a genuinely bad covariance configuration.
pub fn cholesky(a: &SpdMatrix, schedule: &[f64]) -> Result<LowerTriangularFactor, LinalgError> {
    let n = a.order();
    let mut last = 0.0;
    for &delta in schedule {
        last = delta;
        let mut work = a.data.clone();
        if delta != 0.0 {
            for i in 0..n {
                work[[i, i]] += delta;
            }
        }
        if try_factor_in_place(&mut work) {
            // clear the untouched upper triangle
            for i in 0..n {
                for j in (i + 1)..n {
                    work[[i, j]] = 0.0;
                }
            }
            return Ok(LowerTriangularFactor {
                l: work,
                jitter: delta,
            });
        }
    }
    Err(LinalgError::NotPositiveDefinite {
        order: n,
        last_jitter: last,
    })
}

/// Blocked right-looking Cholesky; returns false on a non-positive pivot.
fn try_factor_in_place(a: &mut Array2<f64>) -> bool {
    let n = a.nrows();
    let mut k = 0;
    while k < n {
        let kb = BLOCK.min(n - k);
        if !factor_diag_block(a, k, kb) {
            return false;
        }
        solve_panel(a, k, kb);
        update_trailing(a, k, kb);
        k += kb;
    }
    true
}

/// Unblocked factorization of `a[k..k+kb, k..k+kb]`; prior panels have
/// already been folded into this block by the trailing updates.
fn factor_diag_block(a: &mut Array2<f64>, k: usize, kb: usize) -> bool {
    let n = a.nrows();
    let data = a.as_slice_mut().expect("matrix is contiguous row-major");
    for j in k..k + kb {
        let row_j = &data[j * n + k..j * n + j];
        let sum: f64 = row_j.iter().map(|v| v * v).sum();
        let d = data[j * n + j] - sum;
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        data[j * n + j] = d;
        for i in (j + 1)..(k + kb) {
            let dot: f64 = {
                let ri = &data[i * n + k..i * n + j];
                let rj = &data[j * n + k..j * n + j];
                ri.iter().zip(rj.iter()).map(|(x, y)| x * y).sum()
            };
            data[i * n + j] = (data[i * n + j] - dot) / d;
        }
    }
    true
}

/// Rows below the diagonal block: `P <- P L_kk^{-T}`, row-wise forward
/// substitution over contiguous row prefixes.
fn solve_panel(a: &mut Array2<f64>, k: usize, kb: usize) {
    let n = a.nrows();
    let data = a.as_slice_mut().expect("matrix is contiguous row-major");
    for i in (k + kb)..n {
        for j in k..k + kb {
            let dot: f64 = {
                let ri = &data[i * n + k..i * n + j];
                let rj = &data[j * n + k..j * n + j];
                ri.iter().zip(rj.iter()).map(|(x, y)| x * y).sum()
            };
            data[i * n + j] = (data[i * n + j] - dot) / data[j * n + j];
        }
    }
}

/// Trailing update `A22 <- A22 - P Pt`, lower block-columns only.
fn update_trailing(a: &mut Array2<f64>, k: usize, kb: usize) {
    let n = a.nrows();
    let tail = n - k - kb;
    if tail == 0 {
        return;
    }
    let (left, mut right) = a.view_mut().split_at(Axis(1), k + kb);
    let panel = left.slice(s![k + kb.., k..k + kb]);
    let mut j0 = 0;
    while j0 < tail {
        let jb = BLOCK.min(tail - j0);
        let p_rows = panel.slice(s![j0.., ..]);
        let p_block = panel.slice(s![j0..j0 + jb, ..]);
        let mut c = right.slice_mut(s![k + kb + j0.., j0..j0 + jb]);
        general_mat_mul(-1.0, &p_rows, &p_block.t(), 1.0, &mut c);
        j0 += jb;
    }
}
