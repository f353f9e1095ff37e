//! The benchmark harness: pretrain on source data, fine-tune on target data
//! (transfer), train a target-only network, run the Kriging baseline, and
//! collect MSE against held-out test signal across target sizes and
//! replicates.
//!
//! # Seed hierarchy
//!
//! All randomness derives from the master seed; streams are never reused:
//!
//! ```text
//! master = RandomState::from_seed(master_seed)
//! process stream   = master.derive_child(process.stream_id())
//! pretrain stream  = process.derive_child(0)
//!   surface draw     = pretrain.derive_child(0)
//!   network init     = pretrain.derive_child(1)
//!   training         = pretrain.derive_child(2)
//! cell stream      = process.derive_child(1).derive_child(replicate).derive_child(n)
//!   datasets         = cell.derive_child(0)
//!   fine-tuning      = cell.derive_child(1)
//!   target-only init = cell.derive_child(2)
//!   target-only run  = cell.derive_child(3)
//!   cell pretrain    = cell.derive_child(4)   (per-replicate mode only)
//! ```
//!
//! Changing the replicate count or the size list leaves every other cell's
//! stream untouched, and cells are merged in (process, n, replicate) order,
//! so reports are byte-identical regardless of thread count.

mod config;
mod report;
mod svg;

pub use config::{ConfigError, ExperimentConfig, KrigingMode};
pub use report::{
    read_csv, write_csv, CellSummary, Method, MseReport, MseRow, ReportError,
};
pub use svg::{render_plot_svg, render_svg_string};

use crate::basis::MultiResolutionBasis;
use crate::gp::{GpError, KrigingModel};
use crate::net::{
    self, save_weights, NetError, NetworkParams, TrainTrace, WeightsError,
};
use crate::numerics::RandomState;
use crate::surfaces::{
    extend_to_replicate, make_replicate, Dataset, ProcessKind, StationarySurface, SurfaceError,
};
use rayon::prelude::*;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum ExperimentError {
    Config(ConfigError),
    Basis(crate::basis::BasisError),
    Surface(SurfaceError),
    Net(NetError),
    Gp(GpError),
    Weights(WeightsError),
    Report(ReportError),
    Io(std::io::Error),
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Basis(e) => write!(f, "basis error: {e}"),
            Self::Surface(e) => write!(f, "surface error: {e}"),
            Self::Net(e) => write!(f, "network error: {e}"),
            Self::Gp(e) => write!(f, "gp error: {e}"),
            Self::Weights(e) => write!(f, "{e}"),
            Self::Report(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for ExperimentError {
            fn from(e: $ty) -> Self {
                Self::$variant(e)
            }
        }
    };
}
from_err!(Config, ConfigError);
from_err!(Basis, crate::basis::BasisError);
from_err!(Surface, SurfaceError);
from_err!(Net, NetError);
from_err!(Gp, GpError);
from_err!(Weights, WeightsError);
from_err!(Report, ReportError);
from_err!(Io, std::io::Error);

/// The source data a process pretrains on, in the form replicates extend.
#[derive(Debug)]
pub enum SourceRealization {
    /// Shared stationary realization plus its conditional-extension pieces.
    Stationary(StationarySurface),
    /// The deterministic surface needs no sharing machinery.
    Nonstationary { source: Dataset },
}

impl SourceRealization {
    pub fn source(&self) -> &Dataset {
        match self {
            Self::Stationary(surface) => surface.source(),
            Self::Nonstationary { source } => source,
        }
    }
}

/// Everything the replicate grid needs from the pretraining stage.
pub struct PretrainArtifacts {
    pub weights: NetworkParams,
    pub trace: TrainTrace,
    pub source: SourceRealization,
}

/// Cell stream for `(replicate, n)` under a process stream.
pub fn cell_state(proc_state: &RandomState, replicate: usize, target_n: usize) -> RandomState {
    proc_state
        .derive_child(1)
        .derive_child(replicate as u64)
        .derive_child(target_n as u64)
}

/// Draws the process's source data (no training).
pub fn generate_source(
    process: ProcessKind,
    cfg: &ExperimentConfig,
    pretrain_state: &RandomState,
) -> Result<SourceRealization, ExperimentError> {
    let surface_state = pretrain_state.derive_child(0);
    let rep_cfg = cfg.replicate_config(cfg.target_sizes[0]);
    match process {
        ProcessKind::Stationary => Ok(SourceRealization::Stationary(
            StationarySurface::generate(&rep_cfg, &surface_state)?,
        )),
        ProcessKind::Nonstationary => {
            let locs = crate::surfaces::grid_locations(cfg.source_side);
            let signal: Vec<f64> = locs.iter().map(crate::surfaces::nonstationary_f).collect();
            let sd = cfg.nonstationary_noise_var.sqrt();
            let mut noise_state = surface_state.derive_child(1);
            let observed: Vec<f64> = signal
                .iter()
                .map(|&s| s + sd * noise_state.next_standard_normal())
                .collect();
            Ok(SourceRealization::Nonstationary {
                source: Dataset {
                    role: crate::surfaces::Role::Source,
                    process,
                    locations: locs,
                    signal,
                    observed,
                    seed_lineage: format!("source:{:016x}", surface_state.fingerprint()),
                },
            })
        }
    }
}

/// Pretraining: build the source dataset, embed it, train from a fresh He
/// initialization, and return the weights with their trace.
pub fn run_pretrain(
    process: ProcessKind,
    cfg: &ExperimentConfig,
    basis: &MultiResolutionBasis,
    pretrain_state: &RandomState,
) -> Result<PretrainArtifacts, ExperimentError> {
    let source = generate_source(process, cfg, pretrain_state)?;
    let ds = source.source();
    let design = basis.embed_batch(&ds.locations);
    let arch = net::default_architecture(basis.total_dim());
    let mut init_state = pretrain_state.derive_child(1);
    let init = NetworkParams::he_init(&arch, &mut init_state);
    let train_state = pretrain_state.derive_child(2);
    let (weights, trace) = net::train(init, &design, &ds.observed, &cfg.pretrain, &train_state)?;
    Ok(PretrainArtifacts {
        weights,
        trace,
        source,
    })
}

/// Builds one replicate's target and test datasets on the shared source
/// (the path the benchmark, `simulate`, and `finetune` all share).
pub fn build_cell_datasets(
    process: ProcessKind,
    cfg: &ExperimentConfig,
    source: &SourceRealization,
    proc_state: &RandomState,
    replicate: usize,
    target_n: usize,
) -> Result<(Dataset, Dataset), ExperimentError> {
    let cell = cell_state(proc_state, replicate, target_n);
    let data_state = cell.derive_child(0);
    let rep_cfg = cfg.replicate_config(target_n);
    let surface = match source {
        SourceRealization::Stationary(s) => Some(s),
        SourceRealization::Nonstationary { .. } => None,
    };
    let (target, test) = extend_to_replicate(
        process,
        &rep_cfg,
        surface,
        &source.source().locations,
        &data_state,
    )?;
    Ok((target, test))
}

fn mean_squared_error(pred: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), truth.len());
    pred.iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

/// One replicate: fine-tune the pretrained network, train a fresh network,
/// run Kriging, and score all three against the test signal.
///
/// A Kriging fit failure falls back to the generating parameters and is
/// recorded; the replicate still produces its three rows.
pub fn run_replicate(
    process: ProcessKind,
    target_n: usize,
    replicate: usize,
    pretrained: &NetworkParams,
    source: &SourceRealization,
    cfg: &ExperimentConfig,
    basis: &MultiResolutionBasis,
    proc_state: &RandomState,
) -> Result<(Vec<MseRow>, Vec<String>), ExperimentError> {
    let cell = cell_state(proc_state, replicate, target_n);
    let seed = cell.fingerprint();
    let mut warnings = Vec::new();

    let (target, test) =
        build_cell_datasets(process, cfg, source, proc_state, replicate, target_n)?;
    let x_target = basis.embed_batch(&target.locations);
    let x_test = basis.embed_batch(&test.locations);

    // transfer: all pretrained parameters are updated on the target data
    let (ft, _) = net::train(
        pretrained.clone(),
        &x_target,
        &target.observed,
        &cfg.finetune,
        &cell.derive_child(1),
    )?;
    let mse_transfer = mean_squared_error(&net::forward_batch(&ft, &x_test)?, &test.signal);

    // target-only: fresh initialization, same data
    let arch = net::default_architecture(basis.total_dim());
    let mut init_state = cell.derive_child(2);
    let init = NetworkParams::he_init(&arch, &mut init_state);
    let (to, _) = net::train(
        init,
        &x_target,
        &target.observed,
        &cfg.target_only,
        &cell.derive_child(3),
    )?;
    let mse_target_only = mean_squared_error(&net::forward_batch(&to, &x_test)?, &test.signal);

    // kriging baseline
    let model = match cfg.kriging {
        KrigingMode::Ml => match KrigingModel::fit(target.locations.clone(), target.observed.clone())
        {
            Ok(m) => m,
            Err(e) => {
                warnings.push(format!(
                    "{process} n={target_n} replicate {replicate}: kriging fit failed ({e}); \
                     fell back to generating parameters"
                ));
                KrigingModel::with_params(
                    target.locations.clone(),
                    target.observed.clone(),
                    cfg.matern,
                )?
            }
        },
        KrigingMode::True => KrigingModel::with_params(
            target.locations.clone(),
            target.observed.clone(),
            cfg.matern,
        )?,
    };
    let mse_kriging = mean_squared_error(&model.predict(&test.locations), &test.signal);

    let row = |method: Method, mse: f64| MseRow {
        process,
        method,
        target_n,
        replicate,
        seed,
        mse,
    };
    Ok((
        vec![
            row(Method::Transfer, mse_transfer),
            row(Method::TargetOnly, mse_target_only),
            row(Method::Kriging, mse_kriging),
        ],
        warnings,
    ))
}

/// Sensitivity mode: the cell builds its own joint replicate (fresh source
/// realization included) and pretrains inside the cell.
fn run_replicate_with_own_pretrain(
    process: ProcessKind,
    target_n: usize,
    replicate: usize,
    cfg: &ExperimentConfig,
    basis: &MultiResolutionBasis,
    proc_state: &RandomState,
) -> Result<(Vec<MseRow>, Vec<String>), ExperimentError> {
    let cell = cell_state(proc_state, replicate, target_n);
    let seed = cell.fingerprint();
    let mut warnings = Vec::new();

    let rep_cfg = cfg.replicate_config(target_n);
    let data_state = cell.derive_child(0);
    let (source, target, test) = make_replicate(process, &rep_cfg, &data_state)?;

    let x_source = basis.embed_batch(&source.locations);
    let x_target = basis.embed_batch(&target.locations);
    let x_test = basis.embed_batch(&test.locations);
    let arch = net::default_architecture(basis.total_dim());

    let mut pre_init_state = cell.derive_child(4);
    let pre_init = NetworkParams::he_init(&arch, &mut pre_init_state);
    let (pretrained, _) = net::train(
        pre_init,
        &x_source,
        &source.observed,
        &cfg.pretrain,
        &cell.derive_child(5),
    )?;

    let (ft, _) = net::train(
        pretrained,
        &x_target,
        &target.observed,
        &cfg.finetune,
        &cell.derive_child(1),
    )?;
    let mse_transfer = mean_squared_error(&net::forward_batch(&ft, &x_test)?, &test.signal);

    let mut init_state = cell.derive_child(2);
    let init = NetworkParams::he_init(&arch, &mut init_state);
    let (to, _) = net::train(
        init,
        &x_target,
        &target.observed,
        &cfg.target_only,
        &cell.derive_child(3),
    )?;
    let mse_target_only = mean_squared_error(&net::forward_batch(&to, &x_test)?, &test.signal);

    let model = match cfg.kriging {
        KrigingMode::Ml => match KrigingModel::fit(target.locations.clone(), target.observed.clone())
        {
            Ok(m) => m,
            Err(e) => {
                warnings.push(format!(
                    "{process} n={target_n} replicate {replicate}: kriging fit failed ({e}); \
                     fell back to generating parameters"
                ));
                KrigingModel::with_params(
                    target.locations.clone(),
                    target.observed.clone(),
                    cfg.matern,
                )?
            }
        },
        KrigingMode::True => KrigingModel::with_params(
            target.locations.clone(),
            target.observed.clone(),
            cfg.matern,
        )?,
    };
    let mse_kriging = mean_squared_error(&model.predict(&test.locations), &test.signal);

    let row = |method: Method, mse: f64| MseRow {
        process,
        method,
        target_n,
        replicate,
        seed,
        mse,
    };
    Ok((
        vec![
            row(Method::Transfer, mse_transfer),
            row(Method::TargetOnly, mse_target_only),
            row(Method::Kriging, mse_kriging),
        ],
        warnings,
    ))
}

pub fn pretrained_weights_path(output_dir: &Path, process: ProcessKind) -> PathBuf {
    output_dir.join(format!("pretrained_{process}.sntl"))
}

pub fn pretrain_trace_path(output_dir: &Path, process: ProcessKind) -> PathBuf {
    output_dir.join(format!("pretrain_trace_{process}.csv"))
}

/// Writes a training trace as `epoch,train_mse,val_mse` (validation blank
/// when no split was held out).
pub fn write_trace_csv(trace: &TrainTrace, path: &Path) -> Result<(), std::io::Error> {
    let mut out = String::with_capacity(32 * (trace.train_mse.len() + 1));
    out.push_str("epoch,train_mse,val_mse\n");
    for (i, t) in trace.train_mse.iter().enumerate() {
        let val = trace
            .val_mse
            .as_ref()
            .map(|v| report::format_float(v[i]))
            .unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", i + 1, report::format_float(*t), val));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())
}

/// Runs the whole study: per process one pretraining stage, then the
/// replicate-by-size grid in parallel; writes the pretrained weights, their
/// traces, the MSE CSV, and the SVG plot into the output directory.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<MseReport, ExperimentError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let basis = crate::basis::build_basis(&cfg.basis)?;
    let threads = cfg.threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");

    let master = RandomState::from_seed(cfg.master_seed);
    let mut rows = Vec::new();
    let mut warnings = Vec::new();

    for &process in &cfg.processes {
        let proc_state = master.derive_child(process.stream_id());
        let pretrain_state = proc_state.derive_child(0);

        let pretrained = if cfg.pretrain_per_replicate {
            None
        } else {
            let artifacts = run_pretrain(process, cfg, &basis, &pretrain_state)?;
            save_weights(
                &artifacts.weights,
                &pretrained_weights_path(&cfg.output_dir, process),
            )?;
            write_trace_csv(
                &artifacts.trace,
                &pretrain_trace_path(&cfg.output_dir, process),
            )?;
            Some(artifacts)
        };

        let cells: Vec<(usize, usize)> = cfg
            .target_sizes
            .iter()
            .flat_map(|&n| (0..cfg.replicates).map(move |rep| (n, rep)))
            .collect();

        let results: Vec<Result<(Vec<MseRow>, Vec<String>), String>> = pool.install(|| {
            cells
                .par_iter()
                .map(|&(n, rep)| {
                    let outcome = match &pretrained {
                        Some(artifacts) => run_replicate(
                            process,
                            n,
                            rep,
                            &artifacts.weights,
                            &artifacts.source,
                            cfg,
                            &basis,
                            &proc_state,
                        ),
                        None => run_replicate_with_own_pretrain(
                            process, n, rep, cfg, &basis, &proc_state,
                        ),
                    };
                    outcome.map_err(|e| format!("{process} n={n} replicate {rep}: {e}"))
                })
                .collect()
        });

        for result in results {
            match result {
                Ok((cell_rows, cell_warnings)) => {
                    rows.extend(cell_rows);
                    warnings.extend(cell_warnings);
                }
                Err(message) => warnings.push(format!("excluded: {message}")),
            }
        }
    }

    let report = MseReport { rows, warnings };
    write_csv(&report, &cfg.output_dir.join("mse.csv"))?;
    render_plot_svg(&report, &cfg.output_dir.join("mse_plot.svg"))?;
    Ok(report)
}
