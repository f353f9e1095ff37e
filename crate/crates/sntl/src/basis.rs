//! Wendland radial basis function and the multi-resolution knot embedding.
//!
//! A location in the unit square is expanded into one entry per knot: knots
//! sit on stacked rectangular grids of increasing density, and each level
//! carries a support radius so its basis functions overlap their neighbours.
//! Under the default four-level configuration (3x3 + 5x5 + 7x7 + 7x8) the
//! embedding has 139 entries.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Embedding dimension of the default level configuration.
pub const DEFAULT_EMBEDDING_DIM: usize = 139;

/// How many knot spacings a level's support radius covers by default.
const DEFAULT_SUPPORT_SPACINGS: f64 = 2.5;

/// A point in the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub s1: f64,
    pub s2: f64,
}

impl Location {
    pub fn new(s1: f64, s2: f64) -> Self {
        Self { s1, s2 }
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &Location) -> f64 {
        let d1 = self.s1 - other.s1;
        let d2 = self.s2 - other.s2;
        (d1 * d1 + d2 * d2).sqrt()
    }
}

/// Errors from basis construction and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisError {
    /// Negative (or NaN) distance passed to the Wendland function.
    Domain { value: f64 },
    /// Basis specification has no levels or a degenerate level.
    EmptySpec,
    /// A level has zero rows/cols or a nonpositive support radius.
    BadLevel { rows: usize, cols: usize, theta: f64 },
}

impl std::fmt::Display for BasisError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Domain { value } => write!(f, "wendland requires d >= 0 (got {value})"),
            Self::EmptySpec => write!(f, "basis specification must have at least one level"),
            Self::BadLevel { rows, cols, theta } => write!(
                f,
                "bad basis level: rows={rows} cols={cols} theta={theta}"
            ),
        }
    }
}

impl std::error::Error for BasisError {}

/// Compactly supported Wendland polynomial:
/// `phi(d) = (1 - d)^6 (35 d^2 + 18 d + 3) / 3` on `[0, 1]`, zero beyond.
pub fn wendland(d: f64) -> Result<f64, BasisError> {
    if !(d >= 0.0) {
        return Err(BasisError::Domain { value: d });
    }
    Ok(wendland_unchecked(d))
}

#[inline]
fn wendland_unchecked(d: f64) -> f64 {
    if d >= 1.0 {
        return 0.0;
    }
    let omd = 1.0 - d;
    let omd2 = omd * omd;
    let omd6 = omd2 * omd2 * omd2;
    omd6 * (35.0 * d * d + 18.0 * d + 3.0) / 3.0
}

/// One level of the basis specification: a `rows x cols` knot grid and an
/// optional support radius. When `theta` is absent it defaults to 2.5 knot
/// spacings (the coarser axis for non-square grids).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub theta: Option<f64>,
}

impl LevelSpec {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            theta: None,
        }
    }

    fn resolved_theta(&self) -> f64 {
        match self.theta {
            Some(t) => t,
            None => DEFAULT_SUPPORT_SPACINGS * grid_spacing(self.rows).max(grid_spacing(self.cols)),
        }
    }
}

/// Spacing of an n-point axis grid spanning [0, 1]; a single point counts as
/// covering the whole axis.
fn grid_spacing(n: usize) -> f64 {
    if n > 1 {
        1.0 / (n - 1) as f64
    } else {
        1.0
    }
}

/// Axis coordinate of grid point `i` out of `n`, endpoints on the boundary;
/// a single point sits at the center.
pub(crate) fn grid_coordinate(i: usize, n: usize) -> f64 {
    if n > 1 {
        i as f64 / (n - 1) as f64
    } else {
        0.5
    }
}

/// The default four-level configuration: 3x3 + 5x5 + 7x7 + 7x8 = 139 knots.
pub fn default_level_specs() -> Vec<LevelSpec> {
    vec![
        LevelSpec::new(3, 3),
        LevelSpec::new(5, 5),
        LevelSpec::new(7, 7),
        LevelSpec::new(7, 8),
    ]
}

/// One resolution level: its knot grid and support radius.
#[derive(Clone, Debug)]
pub struct KnotLevel {
    pub rows: usize,
    pub cols: usize,
    pub knots: Vec<Location>,
    pub support_radius: f64,
}

/// Stacked knot levels, ordered coarse to fine; knot ordering is level-major,
/// then row-major within a level.
#[derive(Clone, Debug)]
pub struct MultiResolutionBasis {
    levels: Vec<KnotLevel>,
    total_dim: usize,
}

/// Builds the embedding from a level specification.
pub fn build_basis(specs: &[LevelSpec]) -> Result<MultiResolutionBasis, BasisError> {
    if specs.is_empty() {
        return Err(BasisError::EmptySpec);
    }
    let mut levels = Vec::with_capacity(specs.len());
    let mut total_dim = 0;
    for spec in specs {
        let theta = spec.resolved_theta();
        if spec.rows == 0 || spec.cols == 0 || !(theta > 0.0) {
            return Err(BasisError::BadLevel {
                rows: spec.rows,
                cols: spec.cols,
                theta,
            });
        }
        let mut knots = Vec::with_capacity(spec.rows * spec.cols);
        for i in 0..spec.rows {
            for j in 0..spec.cols {
                knots.push(Location::new(
                    grid_coordinate(i, spec.rows),
                    grid_coordinate(j, spec.cols),
                ));
            }
        }
        total_dim += knots.len();
        levels.push(KnotLevel {
            rows: spec.rows,
            cols: spec.cols,
            knots,
            support_radius: theta,
        });
    }
    Ok(MultiResolutionBasis { levels, total_dim })
}

impl MultiResolutionBasis {
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn levels(&self) -> &[KnotLevel] {
        &self.levels
    }

    /// Embedding of one location: entry for knot `u` at a level with support
    /// `theta` is `wendland(|loc - u| / theta)`.
    pub fn embed(&self, loc: &Location) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim);
        for level in &self.levels {
            let inv_theta = 1.0 / level.support_radius;
            for knot in &level.knots {
                out.push(wendland_unchecked(loc.distance(knot) * inv_theta));
            }
        }
        out
    }

    /// Design matrix whose row `i` is `embed(locs[i])`.
    pub fn embed_batch(&self, locs: &[Location]) -> Array2<f64> {
        let mut out = Array2::zeros((locs.len(), self.total_dim));
        for (i, loc) in locs.iter().enumerate() {
            let mut col = 0;
            for level in &self.levels {
                let inv_theta = 1.0 / level.support_radius;
                for knot in &level.knots {
                    out[[i, col]] = wendland_unchecked(loc.distance(knot) * inv_theta);
                    col += 1;
                }
            }
        }
        out
    }
}
