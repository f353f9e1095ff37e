//! Simulated test surfaces and source/target/test dataset assembly.
//!
//! Two processes are simulated on the unit square. The stationary process is
//! a Matern Gaussian process; source, target, and test values are taken from
//! one shared realization so that a model trained on the source carries
//! signal about the target surface. The non-stationary process is a fixed
//! deterministic surface plus a tiny nugget.
//!
//! [`make_replicate`] draws the joint realization over all three roles in a
//! single factorization, which is what the `simulate` command and the
//! per-replicate-pretraining mode use. The benchmark instead draws the
//! source realization once per process ([`StationarySurface::generate`]) and
//! extends it to each replicate's target/test locations by exact conditional
//! simulation ([`StationarySurface::extend_signal`]) -- the two
//! constructions are equivalent in distribution, and the latter keeps the
//! surface shared across every replicate that reuses the pretrained network.

use crate::basis::Location;
use crate::gp::{cov_matrix, matern_cov, GpError, MaternParams};
use crate::numerics::{cholesky, LinalgError, LowerTriangularFactor, RandomState, SpdMatrix, JITTER_SCHEDULE};
use ndarray::linalg::general_mat_mul;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Which simulated process a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Stationary,
    Nonstationary,
}

impl ProcessKind {
    /// Stable stream index for seed derivation, independent of config order.
    pub fn stream_id(&self) -> u64 {
        match self {
            Self::Stationary => 0,
            Self::Nonstationary => 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Stationary => "stationary",
            Self::Nonstationary => "nonstationary",
        }
    }
}

impl std::fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProcessKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stationary" => Ok(Self::Stationary),
            "nonstationary" => Ok(Self::Nonstationary),
            other => Err(format!("unknown process '{other}'")),
        }
    }
}

/// Role of a dataset within a replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
    Test,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Source => "source",
            Self::Target => "target",
            Self::Test => "test",
        }
    }
}

/// Locations with their noiseless signal and noisy observations.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub role: Role,
    pub process: ProcessKind,
    pub locations: Vec<Location>,
    /// Noiseless surface values; test datasets are scored against these.
    pub signal: Vec<f64>,
    /// `signal` plus nugget noise.
    pub observed: Vec<f64>,
    /// Where in the seed hierarchy this data came from.
    pub seed_lineage: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// Errors from dataset construction.
#[derive(Debug)]
pub enum SurfaceError {
    BadConfig(String),
    Linalg(LinalgError),
    Gp(GpError),
}

impl std::fmt::Display for SurfaceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadConfig(msg) => write!(f, "bad replicate configuration: {msg}"),
            Self::Linalg(e) => write!(f, "linear algebra failure: {e}"),
            Self::Gp(e) => write!(f, "process failure: {e}"),
        }
    }
}

impl std::error::Error for SurfaceError {}

impl From<LinalgError> for SurfaceError {
    fn from(e: LinalgError) -> Self {
        Self::Linalg(e)
    }
}

impl From<GpError> for SurfaceError {
    fn from(e: GpError) -> Self {
        Self::Gp(e)
    }
}

/// Sizes, noise levels, and sampler knobs for one replicate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicateConfig {
    /// Source grid is `source_side x source_side` over the unit square.
    pub source_side: usize,
    /// Target size; must be a perfect square (the targets sit on a jittered
    /// `sqrt(n) x sqrt(n)` grid).
    pub target_n: usize,
    /// Held-out evaluation points, uniform over the square.
    pub test_n: usize,
    /// Stationary process parameters; `tau2` is its nugget variance.
    pub matern: MaternParams,
    /// Nugget variance added to the non-stationary surface.
    pub nonstationary_noise_var: f64,
    /// Target-grid offset scale as a fraction of the target spacing.
    pub jitter_fraction: f64,
}

impl ReplicateConfig {
    pub fn validate(&self) -> Result<(), SurfaceError> {
        if self.source_side == 0 {
            return Err(SurfaceError::BadConfig("source_side must be positive".into()));
        }
        let m = (self.target_n as f64).sqrt().round() as usize;
        if m == 0 || m * m != self.target_n {
            return Err(SurfaceError::BadConfig(format!(
                "target_n must be a positive perfect square (got {})",
                self.target_n
            )));
        }
        if !(self.nonstationary_noise_var >= 0.0) {
            return Err(SurfaceError::BadConfig("negative noise variance".into()));
        }
        if !(self.jitter_fraction > 0.0 && self.jitter_fraction <= 0.5) {
            return Err(SurfaceError::BadConfig(
                "jitter_fraction must be in (0, 0.5]".into(),
            ));
        }
        self.matern.validate()?;
        Ok(())
    }
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            source_side: 70,
            target_n: 25,
            test_n: 2000,
            matern: MaternParams::default(),
            nonstationary_noise_var: 1e-6,
            jitter_fraction: 0.125,
        }
    }
}

/// The fixed non-stationary surface: with `c = (s1 + s2)/2 - 0.9`,
/// `f = sin(30 c^4) cos(2 c) + c / 2`.
pub fn nonstationary_f(loc: &Location) -> f64 {
    let c = (loc.s1 + loc.s2) / 2.0 - 0.9;
    let c2 = c * c;
    (30.0 * c2 * c2).sin() * (2.0 * c).cos() + c / 2.0
}

/// Regular `side x side` grid over the unit square including the boundary,
/// row-major; a single point sits at the center.
pub fn grid_locations(side: usize) -> Vec<Location> {
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            out.push(Location::new(
                crate::basis::grid_coordinate(i, side),
                crate::basis::grid_coordinate(j, side),
            ));
        }
    }
    out
}

/// Minimum separation below which two locations count as coincident.
const COINCIDENCE_EPS: f64 = 1e-9;

fn is_disjoint_from(loc: &Location, others: &[&[Location]]) -> bool {
    others
        .iter()
        .all(|set| set.iter().all(|o| loc.distance(o) > COINCIDENCE_EPS))
}

/// Cell-centered `sqrt(n) x sqrt(n)` target grid shifted by one shared
/// uniform offset; the offset is redrawn until the grid avoids the source
/// locations.
fn target_locations(
    target_n: usize,
    jitter_fraction: f64,
    source: &[Location],
    state: &mut RandomState,
) -> Result<Vec<Location>, SurfaceError> {
    let m = (target_n as f64).sqrt().round() as usize;
    let spacing = 1.0 / m as f64;
    for _attempt in 0..100 {
        let dx = (state.next_f64() - 0.5) * 2.0 * jitter_fraction * spacing;
        let dy = (state.next_f64() - 0.5) * 2.0 * jitter_fraction * spacing;
        let mut locs = Vec::with_capacity(target_n);
        for i in 0..m {
            for j in 0..m {
                locs.push(Location::new(
                    (i as f64 + 0.5) * spacing + dx,
                    (j as f64 + 0.5) * spacing + dy,
                ));
            }
        }
        if locs.iter().all(|l| is_disjoint_from(l, &[source])) {
            return Ok(locs);
        }
    }
    Err(SurfaceError::BadConfig(
        "could not draw a target grid disjoint from the source".into(),
    ))
}

/// Uniform test locations, each redrawn until disjoint from both other roles.
fn test_locations(
    test_n: usize,
    source: &[Location],
    target: &[Location],
    state: &mut RandomState,
) -> Vec<Location> {
    let mut out = Vec::with_capacity(test_n);
    while out.len() < test_n {
        let cand = Location::new(state.next_f64(), state.next_f64());
        if is_disjoint_from(&cand, &[source, target, &out]) {
            out.push(cand);
        }
    }
    out
}

/// Builds one replicate: source on a regular grid, target on a jittered
/// grid, test uniform, all pairwise disjoint.
///
/// Stationary: one realization is drawn jointly over the union of all three
/// location sets (a single covariance factorization), then split, so source
/// and target share the same surface. Non-stationary: the signal is the
/// deterministic surface; only the nugget noise is random.
///
/// Child streams: 0 = locations, 1 = field draw, 2 = observation noise.
pub fn make_replicate(
    process: ProcessKind,
    cfg: &ReplicateConfig,
    state: &RandomState,
) -> Result<(Dataset, Dataset, Dataset), SurfaceError> {
    cfg.validate()?;
    let mut loc_state = state.derive_child(0);
    let mut field_state = state.derive_child(1);
    let mut noise_state = state.derive_child(2);

    let source_locs = grid_locations(cfg.source_side);
    let target_locs = target_locations(cfg.target_n, cfg.jitter_fraction, &source_locs, &mut loc_state)?;
    let test_locs = test_locations(cfg.test_n, &source_locs, &target_locs, &mut loc_state);

    let n_source = source_locs.len();
    let n_target = target_locs.len();
    let n_test = test_locs.len();
    let n_union = n_source + n_target + n_test;

    let (signal, noise_var) = match process {
        ProcessKind::Stationary => {
            let union: Vec<Location> = source_locs
                .iter()
                .chain(target_locs.iter())
                .chain(test_locs.iter())
                .copied()
                .collect();
            let c = cov_matrix(&union, &cfg.matern, false);
            let factor = cholesky(&c, &JITTER_SCHEDULE)?;
            let z: Vec<f64> = (0..n_union).map(|_| field_state.next_standard_normal()).collect();
            (factor.lower_mul(&z)?, cfg.matern.tau2)
        }
        ProcessKind::Nonstationary => {
            let signal: Vec<f64> = source_locs
                .iter()
                .chain(target_locs.iter())
                .chain(test_locs.iter())
                .map(nonstationary_f)
                .collect();
            (signal, cfg.nonstationary_noise_var)
        }
    };

    let sd = noise_var.sqrt();
    let observed: Vec<f64> = signal
        .iter()
        .map(|&s| s + sd * noise_state.next_standard_normal())
        .collect();

    let lineage = format!("replicate:{:016x}", state.fingerprint());
    let make = |role: Role, locs: Vec<Location>, lo: usize, hi: usize| Dataset {
        role,
        process,
        locations: locs,
        signal: signal[lo..hi].to_vec(),
        observed: observed[lo..hi].to_vec(),
        seed_lineage: format!("{lineage}/{}", role.as_str()),
    };

    let source = make(Role::Source, source_locs, 0, n_source);
    let target = make(Role::Target, target_locs, n_source, n_source + n_target);
    let test = make(
        Role::Test,
        test_locs,
        n_source + n_target,
        n_source + n_target + n_test,
    );
    Ok((source, target, test))
}

/// A stationary source realization held fixed across replicates, with the
/// pieces needed to extend it to new locations by conditional simulation.
#[derive(Debug)]
pub struct StationarySurface {
    source: Dataset,
    params: MaternParams,
    /// Factor of the nugget-free source covariance.
    factor: LowerTriangularFactor,
    /// `C_ss^-1 signal_source`, for conditional means.
    alpha: Vec<f64>,
}

impl StationarySurface {
    /// Draws the source realization on the regular grid. Child streams of
    /// `state`: 0 = field draw, 1 = observation noise.
    pub fn generate(
        cfg: &ReplicateConfig,
        state: &RandomState,
    ) -> Result<Self, SurfaceError> {
        cfg.validate()?;
        let mut field_state = state.derive_child(0);
        let mut noise_state = state.derive_child(1);
        let locs = grid_locations(cfg.source_side);
        let c = cov_matrix(&locs, &cfg.matern, false);
        let factor = cholesky(&c, &JITTER_SCHEDULE)?;
        let z: Vec<f64> = (0..locs.len()).map(|_| field_state.next_standard_normal()).collect();
        let signal = factor.lower_mul(&z)?;
        let sd = cfg.matern.tau2.sqrt();
        let observed: Vec<f64> = signal
            .iter()
            .map(|&s| s + sd * noise_state.next_standard_normal())
            .collect();
        let alpha = factor.solve(&signal)?;
        let source = Dataset {
            role: Role::Source,
            process: ProcessKind::Stationary,
            locations: locs,
            signal,
            observed,
            seed_lineage: format!("source:{:016x}", state.fingerprint()),
        };
        Ok(Self {
            source,
            params: cfg.matern,
            factor,
            alpha,
        })
    }

    pub fn source(&self) -> &Dataset {
        &self.source
    }

    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    /// Extends the realization to `locs` with one joint conditional draw:
    /// `mean = C_ts alpha`, `cov = C_tt - V^t V` with `V = L^-1 C_st`, then
    /// `signal = mean + L_c z`. Equivalent in distribution to having drawn
    /// the union realization in one factorization.
    pub fn extend_signal(
        &self,
        locs: &[Location],
        state: &mut RandomState,
    ) -> Result<Vec<f64>, SurfaceError> {
        let m = locs.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let ns = self.source.len();
        let src = &self.source.locations;

        // cross covariance, source rows by target columns
        let mut c_st = Array2::zeros((ns, m));
        for i in 0..ns {
            for j in 0..m {
                c_st[[i, j]] = matern_cov(src[i].distance(&locs[j]), &self.params);
            }
        }

        // conditional mean via alpha, accumulated row-wise
        let mut cond_mean = vec![0.0; m];
        for i in 0..ns {
            let a = self.alpha[i];
            if a != 0.0 {
                let row = c_st.row(i);
                let row = row.as_slice().expect("row-major");
                for (acc, &c) in cond_mean.iter_mut().zip(row.iter()) {
                    *acc += a * c;
                }
            }
        }

        // V = L^-1 C_st, in place
        self.factor.solve_lower_multi(&mut c_st)?;
        let v = c_st;

        // conditional covariance C_tt - V^t V, symmetrized against roundoff
        let mut cond = Array2::zeros((m, m));
        for i in 0..m {
            for j in i..m {
                let c = if i == j {
                    self.params.sigma2
                } else {
                    matern_cov(locs[i].distance(&locs[j]), &self.params)
                };
                cond[[i, j]] = c;
                cond[[j, i]] = c;
            }
        }
        general_mat_mul(-1.0, &v.t(), &v, 1.0, &mut cond);
        for i in 0..m {
            for j in (i + 1)..m {
                let s = 0.5 * (cond[[i, j]] + cond[[j, i]]);
                cond[[i, j]] = s;
                cond[[j, i]] = s;
            }
        }
        let cond = SpdMatrix::new(cond)?;
        let cond_factor = cholesky(&cond, &JITTER_SCHEDULE)?;

        let z: Vec<f64> = (0..m).map(|_| state.next_standard_normal()).collect();
        let fluct = cond_factor.lower_mul(&z)?;
        Ok(cond_mean.iter().zip(fluct.iter()).map(|(a, b)| a + b).collect())
    }
}

/// Builds a replicate's target and test datasets on top of a shared source.
///
/// Locations come from the same samplers as [`make_replicate`]; for the
/// stationary process the signals extend the shared realization, and for the
/// non-stationary process they evaluate the fixed surface. Child streams of
/// `state`: 0 = locations, 1 = field extension, 2 = observation noise.
pub fn extend_to_replicate(
    process: ProcessKind,
    cfg: &ReplicateConfig,
    surface: Option<&StationarySurface>,
    source_locs: &[Location],
    state: &RandomState,
) -> Result<(Dataset, Dataset), SurfaceError> {
    cfg.validate()?;
    let mut loc_state = state.derive_child(0);
    let mut field_state = state.derive_child(1);
    let mut noise_state = state.derive_child(2);

    let target_locs = target_locations(cfg.target_n, cfg.jitter_fraction, source_locs, &mut loc_state)?;
    let test_locs = test_locations(cfg.test_n, source_locs, &target_locs, &mut loc_state);
    let n_target = target_locs.len();

    let (signal, noise_var) = match process {
        ProcessKind::Stationary => {
            let surface = surface.ok_or_else(|| {
                SurfaceError::BadConfig("stationary replicate needs a shared surface".into())
            })?;
            let joint: Vec<Location> = target_locs.iter().chain(test_locs.iter()).copied().collect();
            (
                surface.extend_signal(&joint, &mut field_state)?,
                cfg.matern.tau2,
            )
        }
        ProcessKind::Nonstationary => (
            target_locs
                .iter()
                .chain(test_locs.iter())
                .map(nonstationary_f)
                .collect(),
            cfg.nonstationary_noise_var,
        ),
    };

    let sd = noise_var.sqrt();
    let observed: Vec<f64> = signal
        .iter()
        .map(|&s| s + sd * noise_state.next_standard_normal())
        .collect();

    let lineage = format!("cell:{:016x}", state.fingerprint());
    let target = Dataset {
        role: Role::Target,
        process,
        locations: target_locs,
        signal: signal[..n_target].to_vec(),
        observed: observed[..n_target].to_vec(),
        seed_lineage: format!("{lineage}/target"),
    };
    let test = Dataset {
        role: Role::Test,
        process,
        locations: test_locs,
        signal: signal[n_target..].to_vec(),
        observed: observed[n_target..].to_vec(),
        seed_lineage: format!("{lineage}/test"),
    };
    Ok((target, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ReplicateConfig {
        ReplicateConfig {
            source_side: 3,
            target_n: 4,
            test_n: 5,
            matern: MaternParams::new(1.0, 0.5, 0.01),
            nonstationary_noise_var: 1e-6,
            jitter_fraction: 0.125,
        }
    }

    #[test]
    fn nonstationary_surface_vanishes_where_every_term_does() {
        assert_eq!(nonstationary_f(&Location::new(0.9, 0.9)), 0.0);
        // any pair averaging to 0.9 works
        assert_eq!(nonstationary_f(&Location::new(0.8, 1.0)), 0.0);
    }

    #[test]
    fn nonstationary_surface_reference_values() {
        let center = nonstationary_f(&Location::new(0.5, 0.5));
        assert!((center - 0.2839).abs() < 1e-3, "f(0.5,0.5) = {center}");
        let origin = nonstationary_f(&Location::new(0.0, 0.0));
        assert!((origin + 0.6182).abs() < 1e-3, "f(0,0) = {origin}");
    }

    #[test]
    fn nonstationary_signal_is_the_surface_exactly() {
        let state = RandomState::from_seed(3);
        let (source, target, test) =
            make_replicate(ProcessKind::Nonstationary, &tiny_config(), &state).unwrap();
        for ds in [&source, &target, &test] {
            for (loc, sig) in ds.locations.iter().zip(ds.signal.iter()) {
                assert_eq!(*sig, nonstationary_f(loc));
            }
        }
    }

    #[test]
    fn same_seed_yields_bit_identical_replicates() {
        let state = RandomState::from_seed(11);
        let cfg = tiny_config();
        let (s1, t1, e1) = make_replicate(ProcessKind::Stationary, &cfg, &state).unwrap();
        let (s2, t2, e2) = make_replicate(ProcessKind::Stationary, &cfg, &state).unwrap();
        assert_eq!(s1.signal, s2.signal);
        assert_eq!(t1.observed, t2.observed);
        assert_eq!(e1.signal, e2.signal);
        assert_eq!(
            t1.locations
                .iter()
                .map(|l| (l.s1, l.s2))
                .collect::<Vec<_>>(),
            t2.locations
                .iter()
                .map(|l| (l.s1, l.s2))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn roles_are_pairwise_disjoint() {
        let state = RandomState::from_seed(17);
        let (source, target, test) =
            make_replicate(ProcessKind::Stationary, &tiny_config(), &state).unwrap();
        for t in &target.locations {
            assert!(is_disjoint_from(t, &[&source.locations]));
        }
        for e in &test.locations {
            assert!(is_disjoint_from(e, &[&source.locations, &target.locations]));
        }
    }

    #[test]
    fn target_grid_is_a_perfect_square_requirement() {
        let mut cfg = tiny_config();
        cfg.target_n = 5;
        let state = RandomState::from_seed(1);
        assert!(make_replicate(ProcessKind::Stationary, &cfg, &state).is_err());
    }

    #[test]
    fn extension_matches_surface_at_source_points_in_the_limit() {
        // extending to a location essentially on top of a source point must
        // reproduce that point's signal (conditional variance ~ 0)
        let cfg = ReplicateConfig {
            source_side: 4,
            matern: MaternParams::new(1.0, 0.5, 0.0),
            ..tiny_config()
        };
        let surface =
            StationarySurface::generate(&cfg, &RandomState::from_seed(21)).unwrap();
        let src_loc = surface.source().locations[5];
        let probe = Location::new(src_loc.s1 + 1e-7, src_loc.s2);
        let mut state = RandomState::from_seed(1);
        let got = surface.extend_signal(&[probe], &mut state).unwrap()[0];
        let want = surface.source().signal[5];
        assert!(
            (got - want).abs() < 1e-3,
            "extension at a source point: {got} vs {want}"
        );
    }

    #[test]
    fn grid_locations_cover_the_square() {
        let g = grid_locations(3);
        assert_eq!(g.len(), 9);
        assert_eq!((g[0].s1, g[0].s2), (0.0, 0.0));
        assert_eq!((g[8].s1, g[8].s2), (1.0, 1.0));
        let g1 = grid_locations(1);
        assert_eq!((g1[0].s1, g1[0].s2), (0.5, 0.5));
    }
}
