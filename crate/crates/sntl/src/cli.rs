//! The `sntl` command line: simulation, training, prediction, benchmarking,
//! and plotting.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unreadable or invalid
//! config), 2 runtime failure. Usage errors are reported before any output
//! file is created. Every run that writes results appends a line to
//! `manifest.jsonl` in the output directory recording the config hash,
//! master seed, and artifact version.

use crate::basis::{build_basis, Location, MultiResolutionBasis};
use crate::experiment::{
    self, build_cell_datasets, generate_source, read_csv, render_plot_svg, run_benchmark,
    run_pretrain, ExperimentConfig, ExperimentError,
};
use crate::net::{self, load_weights, load_weights_expecting, save_weights};
use crate::numerics::RandomState;
use crate::surfaces::{Dataset, ProcessKind};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable overriding the output directory; the `--out-dir`
/// flag wins over both this and the config file.
pub const OUT_DIR_ENV: &str = "SNTL_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "sntl",
    version,
    about = "Spatial transfer-learning benchmark: radial-basis network, fine-tuning, Kriging",
    long_about = "Spatial prediction on the unit square. A feed-forward network on a \
multi-resolution Wendland embedding is pretrained on a large source dataset and \
fine-tuned on small target datasets; the benchmark compares it against a \
target-only network and ordinary Kriging on simulated stationary (Matern) and \
non-stationary surfaces.\n\n\
The config file is a JSON document; every field is optional. Top-level keys: \
processes, target_sizes, replicates, master_seed, basis (list of {rows, cols, theta}), \
matern ({sigma2, nu, rho, tau2}), nonstationary_noise_var, source_side, test_size, \
pretrain/finetune/target_only ({epochs, learning_rate, batch_size, validation_fraction, \
beta1, beta2, epsilon}), kriging (\"ml\" | \"true\"), pretrain_per_replicate, threads, \
output_dir."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file; defaults apply for every omitted field.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for replicate-level parallelism.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory override (also honors SNTL_OUT_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug)]
struct CellArgs {
    /// Which simulated process.
    #[arg(long, value_name = "stationary|nonstationary")]
    process: ProcessKind,

    /// Target dataset size (perfect square).
    #[arg(long, value_name = "N")]
    target_n: usize,

    /// Replicate index within the benchmark grid.
    #[arg(long, value_name = "R", default_value_t = 0)]
    replicate: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one replicate's datasets as CSV (role,s1,s2,signal,observed).
    ///
    /// Reproduces exactly the source/target/test data the benchmark uses for
    /// the same config, seed, process, target size, and replicate index.
    Simulate {
        #[command(flatten)]
        cell: CellArgs,

        /// Output CSV path (default: <out_dir>/simulated_<process>_n<N>_rep<R>.csv).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Pretrain on the process's source dataset and save the weights.
    ///
    /// Writes pretrained_<process>.sntl and pretrain_trace_<process>.csv
    /// (epoch,train_mse,val_mse) into the output directory.
    Pretrain {
        #[arg(long, value_name = "stationary|nonstationary")]
        process: ProcessKind,
    },

    /// Fine-tune pretrained weights on one replicate's target data.
    ///
    /// Rebuilds the replicate from the seed hierarchy, updates all layers,
    /// saves the result, and prints the test MSE the benchmark would report
    /// for the transfer method in this cell.
    Finetune {
        #[command(flatten)]
        cell: CellArgs,

        /// Pretrained weight file (architecture must match the basis).
        #[arg(long, value_name = "FILE")]
        weights: PathBuf,

        /// Where to save the fine-tuned weights.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Run the network on a points file (CSV with header s1,s2).
    ///
    /// Writes s1,s2,prediction rows, one prediction per input row.
    Predict {
        /// Weight file to evaluate.
        #[arg(long, value_name = "FILE")]
        weights: PathBuf,

        /// Input CSV with header s1,s2.
        #[arg(long, value_name = "FILE")]
        points: PathBuf,

        /// Output CSV path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Run the full benchmark grid and write mse.csv plus mse_plot.svg.
    ///
    /// CSV schema: process,method,target_n,replicate,seed,mse with floats at
    /// 17 significant digits. Weight files carry magic "SNTL", format
    /// version, per-layer dims and row-major little-endian f64 entries, and
    /// a trailing CRC32.
    Benchmark,

    /// Re-render the SVG plot from an existing mse.csv.
    Plot {
        /// Report CSV produced by the benchmark.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,

        /// Output SVG path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

/// Failures after argument parsing succeeded.
enum RunError {
    /// Bad config or inputs; exit 1, nothing written.
    Usage(String),
    /// The run itself failed; exit 2.
    Runtime(String),
}

impl From<ExperimentError> for RunError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => Self::Usage(c.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

/// Parses `argv` and runs the requested command, returning the exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };

    match dispatch(cli) {
        Ok(()) => 0,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            ExperimentConfig::from_json_file(path).map_err(|e| RunError::Usage(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.output_dir = PathBuf::from(dir);
        }
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn append_manifest(cfg: &ExperimentConfig, command: &str) -> Result<(), RunError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| RunError::Runtime(format!("cannot create output dir: {e}")))?;
    let line = format!(
        "{{\"command\":\"{command}\",\"config_hash\":\"{:016x}\",\"master_seed\":{},\"version\":\"{}\"}}\n",
        cfg.content_hash(),
        cfg.master_seed,
        env!("CARGO_PKG_VERSION"),
    );
    let path = cfg.output_dir.join("manifest.jsonl");
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| RunError::Runtime(format!("cannot open manifest: {e}")))?;
    file.write_all(line.as_bytes())
        .map_err(|e| RunError::Runtime(format!("cannot write manifest: {e}")))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    let cfg = load_config(&cli)?;
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Simulate { cell, out } => cmd_simulate(&cfg, &cell, out, verbose),
        Command::Pretrain { process } => cmd_pretrain(&cfg, process, verbose),
        Command::Finetune { cell, weights, out } => {
            cmd_finetune(&cfg, &cell, &weights, &out, verbose)
        }
        Command::Predict {
            weights,
            points,
            out,
        } => cmd_predict(&cfg, &weights, &points, &out),
        Command::Benchmark => cmd_benchmark(&cfg, verbose),
        Command::Plot { report, out } => cmd_plot(&report, &out),
    }
}

fn study_basis(cfg: &ExperimentConfig) -> Result<MultiResolutionBasis, RunError> {
    build_basis(&cfg.basis).map_err(|e| RunError::Usage(e.to_string()))
}

fn validate_cell(cell: &CellArgs) -> Result<(), RunError> {
    let m = (cell.target_n as f64).sqrt().round() as usize;
    if cell.target_n == 0 || m * m != cell.target_n {
        return Err(RunError::Usage(format!(
            "target_n must be a positive perfect square (got {})",
            cell.target_n
        )));
    }
    Ok(())
}

fn cell_source(
    cfg: &ExperimentConfig,
    process: ProcessKind,
) -> Result<(experiment::SourceRealization, RandomState), RunError> {
    let master = RandomState::from_seed(cfg.master_seed);
    let proc_state = master.derive_child(process.stream_id());
    let pretrain_state = proc_state.derive_child(0);
    let source = generate_source(process, cfg, &pretrain_state)?;
    Ok((source, proc_state))
}

fn cmd_simulate(
    cfg: &ExperimentConfig,
    cell: &CellArgs,
    out: Option<PathBuf>,
    verbose: bool,
) -> Result<(), RunError> {
    validate_cell(cell)?;
    let (source, proc_state) = cell_source(cfg, cell.process)?;
    let (target, test) =
        build_cell_datasets(cell.process, cfg, &source, &proc_state, cell.replicate, cell.target_n)?;
    let path = out.unwrap_or_else(|| {
        cfg.output_dir.join(format!(
            "simulated_{}_n{}_rep{}.csv",
            cell.process, cell.target_n, cell.replicate
        ))
    });
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| RunError::Runtime(format!("cannot create output dir: {e}")))?;
        }
    }
    let mut text = String::from("role,s1,s2,signal,observed\n");
    for ds in [source.source(), &target, &test] {
        push_dataset_rows(&mut text, ds);
    }
    std::fs::write(&path, text).map_err(|e| RunError::Runtime(e.to_string()))?;
    if verbose {
        eprintln!(
            "wrote {} ({} source, {} target, {} test rows)",
            path.display(),
            source.source().len(),
            target.len(),
            test.len()
        );
    }
    append_manifest(cfg, "simulate")?;
    println!("{}", path.display());
    Ok(())
}

fn push_dataset_rows(text: &mut String, ds: &Dataset) {
    for i in 0..ds.len() {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            ds.role.as_str(),
            fmt17(ds.locations[i].s1),
            fmt17(ds.locations[i].s2),
            fmt17(ds.signal[i]),
            fmt17(ds.observed[i]),
        ));
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn cmd_pretrain(cfg: &ExperimentConfig, process: ProcessKind, verbose: bool) -> Result<(), RunError> {
    let basis = study_basis(cfg)?;
    let master = RandomState::from_seed(cfg.master_seed);
    let pretrain_state = master.derive_child(process.stream_id()).derive_child(0);
    if verbose {
        eprintln!(
            "pretraining on {process}: {} source points, {} epochs",
            cfg.source_side * cfg.source_side,
            cfg.pretrain.epochs
        );
    }
    let artifacts = run_pretrain(process, cfg, &basis, &pretrain_state)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| RunError::Runtime(format!("cannot create output dir: {e}")))?;
    let wpath = experiment::pretrained_weights_path(&cfg.output_dir, process);
    save_weights(&artifacts.weights, &wpath).map_err(|e| RunError::Runtime(e.to_string()))?;
    let tpath = experiment::pretrain_trace_path(&cfg.output_dir, process);
    experiment::write_trace_csv(&artifacts.trace, &tpath)
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    append_manifest(cfg, "pretrain")?;
    let final_mse = artifacts.trace.train_mse.last().copied().unwrap_or(f64::NAN);
    println!("{}", wpath.display());
    println!("final_train_mse,{}", fmt17(final_mse));
    if let Some(val) = artifacts.trace.val_mse.as_ref().and_then(|v| v.last()) {
        println!("final_val_mse,{}", fmt17(*val));
    }
    Ok(())
}

fn cmd_finetune(
    cfg: &ExperimentConfig,
    cell: &CellArgs,
    weights: &Path,
    out: &Path,
    verbose: bool,
) -> Result<(), RunError> {
    validate_cell(cell)?;
    let basis = study_basis(cfg)?;
    let arch = net::default_architecture(basis.total_dim());
    let pretrained = load_weights_expecting(weights, &arch)
        .map_err(|e| RunError::Usage(e.to_string()))?;

    let (source, proc_state) = cell_source(cfg, cell.process)?;
    let (target, test) =
        build_cell_datasets(cell.process, cfg, &source, &proc_state, cell.replicate, cell.target_n)?;
    let x_target = basis.embed_batch(&target.locations);
    let x_test = basis.embed_batch(&test.locations);

    let cell_stream = experiment::cell_state(&proc_state, cell.replicate, cell.target_n);
    let (ft, trace) = net::train(
        pretrained,
        &x_target,
        &target.observed,
        &cfg.finetune,
        &cell_stream.derive_child(1),
    )
    .map_err(|e| RunError::Runtime(e.to_string()))?;

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| RunError::Runtime(format!("cannot create output dir: {e}")))?;
        }
    }
    save_weights(&ft, out).map_err(|e| RunError::Runtime(e.to_string()))?;

    let preds = net::forward_batch(&ft, &x_test).map_err(|e| RunError::Runtime(e.to_string()))?;
    let mse = preds
        .iter()
        .zip(test.signal.iter())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / preds.len() as f64;
    if verbose {
        eprintln!(
            "fine-tuned {} epochs on {} target points (final train MSE {:.3e})",
            cfg.finetune.epochs,
            target.len(),
            trace.train_mse.last().copied().unwrap_or(f64::NAN)
        );
    }
    append_manifest(cfg, "finetune")?;
    println!("{}", out.display());
    println!("test_mse,{}", fmt17(mse));
    Ok(())
}

fn read_points_csv(path: &Path) -> Result<Vec<Location>, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Usage(format!("cannot read points file: {e}")))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "s1,s2" => {}
        Some((_, other)) => {
            return Err(RunError::Usage(format!(
                "points file must start with header 's1,s2' (got '{other}')"
            )))
        }
        None => return Err(RunError::Usage("points file is empty".into())),
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let err = |what: &str| RunError::Usage(format!("points line {}: {what}", idx + 1));
        let s1: f64 = parts
            .next()
            .ok_or_else(|| err("missing s1"))?
            .trim()
            .parse()
            .map_err(|_| err("bad s1"))?;
        let s2: f64 = parts
            .next()
            .ok_or_else(|| err("missing s2"))?
            .trim()
            .parse()
            .map_err(|_| err("bad s2"))?;
        if parts.next().is_some() {
            return Err(err("expected exactly two fields"));
        }
        points.push(Location::new(s1, s2));
    }
    Ok(points)
}

fn cmd_predict(
    cfg: &ExperimentConfig,
    weights: &Path,
    points: &Path,
    out: &Path,
) -> Result<(), RunError> {
    let basis = study_basis(cfg)?;
    let params = load_weights(weights).map_err(|e| RunError::Usage(e.to_string()))?;
    if params.input_dim() != basis.total_dim() {
        return Err(RunError::Usage(format!(
            "weight file expects {} inputs but the basis embeds into {}",
            params.input_dim(),
            basis.total_dim()
        )));
    }
    let locs = read_points_csv(points)?;
    let design = basis.embed_batch(&locs);
    let preds = net::forward_batch(&params, &design).map_err(|e| RunError::Runtime(e.to_string()))?;

    let mut text = String::from("s1,s2,prediction\n");
    for (loc, p) in locs.iter().zip(preds.iter()) {
        text.push_str(&format!("{},{},{}\n", fmt17(loc.s1), fmt17(loc.s2), fmt17(*p)));
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| RunError::Runtime(format!("cannot create output dir: {e}")))?;
        }
    }
    std::fs::write(out, text).map_err(|e| RunError::Runtime(e.to_string()))?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_benchmark(cfg: &ExperimentConfig, verbose: bool) -> Result<(), RunError> {
    if verbose {
        eprintln!(
            "benchmark: {:?} sizes={:?} replicates={} seed={}",
            cfg.processes, cfg.target_sizes, cfg.replicates, cfg.master_seed
        );
    }
    let report = run_benchmark(cfg)?;
    append_manifest(cfg, "benchmark")?;

    println!("wrote {}", cfg.output_dir.join("mse.csv").display());
    println!("wrote {}", cfg.output_dir.join("mse_plot.svg").display());
    println!("process,method,target_n,mean_mse,std_error,count");
    for cell in report.aggregate() {
        println!(
            "{},{},{},{},{},{}",
            cell.process,
            cell.method,
            cell.target_n,
            fmt17(cell.mean),
            fmt17(cell.std_error),
            cell.count
        );
    }
    if !report.warnings.is_empty() {
        eprintln!("{} warning(s):", report.warnings.len());
        for w in &report.warnings {
            eprintln!("  {w}");
        }
    }
    Ok(())
}

fn cmd_plot(report_path: &Path, out: &Path) -> Result<(), RunError> {
    let report = read_csv(report_path).map_err(|e| RunError::Usage(e.to_string()))?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| RunError::Runtime(format!("cannot create output dir: {e}")))?;
        }
    }
    render_plot_svg(&report, out).map_err(|e| RunError::Runtime(e.to_string()))?;
    println!("{}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_exits_one() {
        let code = parse_and_dispatch(["sntl", "frobnicate"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(parse_and_dispatch(["sntl", "--help"]), 0);
        assert_eq!(parse_and_dispatch(["sntl", "benchmark", "--help"]), 0);
    }

    #[test]
    fn missing_required_flag_exits_one() {
        assert_eq!(parse_and_dispatch(["sntl", "predict"]), 1);
    }

    #[test]
    fn bad_config_path_exits_one() {
        let code = parse_and_dispatch([
            "sntl",
            "simulate",
            "--process",
            "stationary",
            "--target-n",
            "4",
            "--config",
            "/nonexistent/config.json",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn non_square_target_is_a_usage_error() {
        let code = parse_and_dispatch([
            "sntl",
            "simulate",
            "--process",
            "stationary",
            "--target-n",
            "5",
        ]);
        assert_eq!(code, 1);
    }
}
