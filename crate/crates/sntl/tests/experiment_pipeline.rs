//! Orchestration tests on miniature configurations: row bookkeeping, seed
//! hierarchy, reproducibility across reruns and thread counts, aggregate
//! consistency, SVG structure, and the transfer-identity diagnostic.

use sntl::experiment::{
    build_cell_datasets, generate_source, run_benchmark, run_replicate, ExperimentConfig,
    Method, MseReport,
};
use sntl::net::TrainConfig;
use sntl::numerics::RandomState;
use sntl::surfaces::ProcessKind;
use std::path::PathBuf;

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 1e-3,
        batch_size: 16,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    }
}

/// A benchmark config small enough to run in seconds.
fn tiny_config(dir: &str) -> ExperimentConfig {
    ExperimentConfig {
        processes: vec![ProcessKind::Stationary, ProcessKind::Nonstationary],
        target_sizes: vec![4, 9],
        replicates: 2,
        master_seed: 11,
        source_side: 8,
        test_size: 40,
        pretrain: TrainConfig {
            validation_fraction: 0.2,
            ..tiny_train(20)
        },
        finetune: tiny_train(15),
        target_only: tiny_train(15),
        threads: Some(2),
        output_dir: out_dir(dir),
        ..ExperimentConfig::default()
    }
}

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sntl-pipe-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn rows_sorted(report: &MseReport) -> Vec<(String, String, usize, usize, u64, f64)> {
    report
        .rows
        .iter()
        .map(|r| {
            (
                r.process.to_string(),
                r.method.to_string(),
                r.target_n,
                r.replicate,
                r.seed,
                r.mse,
            )
        })
        .collect()
}

#[test]
fn benchmark_produces_the_full_grid_of_rows() {
    let cfg = tiny_config("grid");
    let report = run_benchmark(&cfg).unwrap();
    // processes x sizes x replicates x methods
    assert_eq!(report.rows.len(), 2 * 2 * 2 * 3);
    for row in &report.rows {
        assert!(row.mse.is_finite() && row.mse >= 0.0);
    }
    // paired design: the three methods of one cell share the same seed
    for chunk in report.rows.chunks(3) {
        assert_eq!(chunk[0].seed, chunk[1].seed);
        assert_eq!(chunk[0].seed, chunk[2].seed);
        assert_eq!(chunk[0].method, Method::Transfer);
        assert_eq!(chunk[1].method, Method::TargetOnly);
        assert_eq!(chunk[2].method, Method::Kriging);
    }
}

#[test]
fn rerun_with_same_seed_is_byte_identical_and_thread_invariant() {
    let mut cfg = tiny_config("rerun-a");
    let report_a = run_benchmark(&cfg).unwrap();
    let csv_a = std::fs::read(cfg.output_dir.join("mse.csv")).unwrap();
    let weights_a = std::fs::read(cfg.output_dir.join("pretrained_stationary.sntl")).unwrap();

    cfg.output_dir = out_dir("rerun-b");
    cfg.threads = Some(1);
    let report_b = run_benchmark(&cfg).unwrap();
    let csv_b = std::fs::read(cfg.output_dir.join("mse.csv")).unwrap();
    let weights_b = std::fs::read(cfg.output_dir.join("pretrained_stationary.sntl")).unwrap();

    assert_eq!(rows_sorted(&report_a), rows_sorted(&report_b));
    assert_eq!(csv_a, csv_b, "CSV must not depend on thread count");
    assert_eq!(weights_a, weights_b, "weight files must be identical");
}

#[test]
fn shrinking_the_replicate_count_preserves_the_prefix() {
    let mut cfg = tiny_config("prefix-a");
    cfg.replicates = 3;
    let big = run_benchmark(&cfg).unwrap();
    cfg.output_dir = out_dir("prefix-b");
    cfg.replicates = 2;
    let small = run_benchmark(&cfg).unwrap();

    let pick = |report: &MseReport, max_rep: usize| {
        report
            .rows
            .iter()
            .filter(|r| r.replicate < max_rep)
            .map(|r| (r.process.to_string(), r.method.to_string(), r.target_n, r.replicate, r.mse))
            .collect::<Vec<_>>()
    };
    assert_eq!(pick(&big, 2), pick(&small, 2));
}

#[test]
fn aggregates_recompute_from_rows() {
    let cfg = tiny_config("agg");
    let report = run_benchmark(&cfg).unwrap();
    for cell in report.aggregate() {
        let values: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| {
                r.process == cell.process && r.method == cell.method && r.target_n == cell.target_n
            })
            .map(|r| r.mse)
            .collect();
        assert_eq!(values.len(), cell.count);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - cell.mean).abs() <= 1e-12 * mean.abs().max(1.0));
        let var =
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        let se = (var / values.len() as f64).sqrt();
        assert!((se - cell.std_error).abs() <= 1e-12 * se.abs().max(1.0));
    }
}

/// Stack-based well-formedness scan: every opened tag closes in order.
fn assert_well_formed_xml(text: &str) {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        rest = &rest[start + 1..];
        let end = rest.find('>').expect("unterminated tag");
        let tag = &rest[..end];
        rest = &rest[end + 1..];
        if tag.starts_with('?') || tag.starts_with('!') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            let open = stack.pop().unwrap_or_else(|| panic!("stray closer </{name}>"));
            assert_eq!(open, name, "mismatched closing tag");
        } else if !tag.ends_with('/') {
            let name: String = tag
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_string();
            stack.push(name);
        }
    }
    assert!(stack.is_empty(), "unclosed tags: {stack:?}");
}

#[test]
fn svg_is_well_formed_with_three_polylines_per_panel() {
    let cfg = tiny_config("svg");
    run_benchmark(&cfg).unwrap();
    let svg = std::fs::read_to_string(cfg.output_dir.join("mse_plot.svg")).unwrap();
    assert_well_formed_xml(&svg);
    let panels = cfg.processes.len();
    assert_eq!(svg.matches("<polyline").count(), 3 * panels);
}

#[test]
fn zero_epoch_finetune_reports_the_pretrained_test_mse() {
    // transfer identity: with 0 fine-tuning epochs, the transfer row equals
    // the pretrained network evaluated on the cell's test set
    let mut cfg = tiny_config("ident");
    cfg.finetune = tiny_train(0);
    let basis = sntl::basis::build_basis(&cfg.basis).unwrap();
    let process = ProcessKind::Nonstationary;
    let master = RandomState::from_seed(cfg.master_seed);
    let proc_state = master.derive_child(process.stream_id());
    let artifacts =
        sntl::experiment::run_pretrain(process, &cfg, &basis, &proc_state.derive_child(0)).unwrap();

    let (rows, _) = run_replicate(
        process,
        4,
        0,
        &artifacts.weights,
        &artifacts.source,
        &cfg,
        &basis,
        &proc_state,
    )
    .unwrap();
    let transfer_mse = rows
        .iter()
        .find(|r| r.method == Method::Transfer)
        .unwrap()
        .mse;

    let (_, test) =
        build_cell_datasets(process, &cfg, &artifacts.source, &proc_state, 0, 4).unwrap();
    let x_test = basis.embed_batch(&test.locations);
    let preds = sntl::net::forward_batch(&artifacts.weights, &x_test).unwrap();
    let want: f64 = preds
        .iter()
        .zip(test.signal.iter())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / preds.len() as f64;
    assert_eq!(transfer_mse, want, "transfer identity must hold exactly");
}

#[test]
fn source_realization_is_shared_across_cells() {
    // the stationary source drawn for pretraining must be the same object
    // every replicate extends; two different cells see identical sources
    let cfg = tiny_config("shared");
    let master = RandomState::from_seed(cfg.master_seed);
    let proc_state = master.derive_child(ProcessKind::Stationary.stream_id());
    let source = generate_source(ProcessKind::Stationary, &cfg, &proc_state.derive_child(0)).unwrap();
    let (t1, _) = build_cell_datasets(ProcessKind::Stationary, &cfg, &source, &proc_state, 0, 4).unwrap();
    let (t2, _) = build_cell_datasets(ProcessKind::Stationary, &cfg, &source, &proc_state, 1, 4).unwrap();
    // different replicates, different targets
    assert_ne!(
        t1.locations.iter().map(|l| (l.s1, l.s2)).collect::<Vec<_>>(),
        t2.locations.iter().map(|l| (l.s1, l.s2)).collect::<Vec<_>>()
    );
    // but one underlying surface
    assert_eq!(source.source().signal.len(), cfg.source_side * cfg.source_side);
}
