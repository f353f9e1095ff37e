//! Network oracles: analytic backpropagation against central differences,
//! the forward pass against a straight-line reimplementation, and the
//! optimization-sanity trace property.

use ndarray::Array2;
use sntl::net::{backward, forward, train, NetworkParams, TrainConfig};
use sntl::numerics::{finite_diff_gradient, RandomState};

/// Straight-line reimplementation of the forward pass: explicit loops,
/// no shared code with the library path.
fn forward_reference(params: &NetworkParams, x: &[f64]) -> f64 {
    let n_layers = params.layers().len();
    let mut cur = x.to_vec();
    for (k, layer) in params.layers().iter().enumerate() {
        let mut next = vec![0.0; layer.out_dim()];
        for o in 0..layer.out_dim() {
            let mut acc = layer.bias[o];
            for i in 0..layer.in_dim() {
                acc += layer.weight[[o, i]] * cur[i];
            }
            next[o] = if k + 1 < n_layers && acc < 0.0 { 0.0 } else { acc };
        }
        cur = next;
    }
    cur[0]
}

fn flatten(params: &NetworkParams) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in params.layers() {
        out.extend(layer.weight.iter().copied());
        out.extend(layer.bias.iter().copied());
    }
    out
}

fn unflatten(template: &NetworkParams, flat: &[f64]) -> NetworkParams {
    let mut params = template.clone();
    let mut idx = 0;
    for layer in params.layers_mut() {
        for w in layer.weight.iter_mut() {
            *w = flat[idx];
            idx += 1;
        }
        for b in layer.bias.iter_mut() {
            *b = flat[idx];
            idx += 1;
        }
    }
    assert_eq!(idx, flat.len());
    params
}

/// Smallest pre-activation magnitude across hidden layers; used to keep
/// finite differences away from ReLU kinks.
fn kink_margin(params: &NetworkParams, x: &[f64]) -> f64 {
    let n_layers = params.layers().len();
    let mut margin = f64::INFINITY;
    let mut cur = x.to_vec();
    for (k, layer) in params.layers().iter().enumerate() {
        let mut next = vec![0.0; layer.out_dim()];
        for o in 0..layer.out_dim() {
            let mut acc = layer.bias[o];
            for i in 0..layer.in_dim() {
                acc += layer.weight[[o, i]] * cur[i];
            }
            if k + 1 < n_layers {
                margin = margin.min(acc.abs());
                next[o] = acc.max(0.0);
            } else {
                next[o] = acc;
            }
        }
        cur = next;
    }
    margin
}

#[test]
fn forward_matches_straight_line_reference() {
    let mut state = RandomState::from_seed(11);
    for arch in [
        vec![139, 100, 1],
        vec![139, 3, 3, 3, 3, 3, 3, 3, 1],
        vec![7, 5, 4, 1],
    ] {
        let params = NetworkParams::he_init(&arch, &mut state);
        for _ in 0..10 {
            let x: Vec<f64> = (0..arch[0]).map(|_| state.next_standard_normal()).collect();
            let (y, _) = forward(&params, &x).unwrap();
            let want = forward_reference(&params, &x);
            assert!(
                (y - want).abs() <= 1e-12 * want.abs().max(1.0),
                "forward {y} vs reference {want}"
            );
        }
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    // twenty random shrunken networks (the full-width study net has the
    // same code path); >= 99% of coordinates must agree within tolerance
    let mut state = RandomState::from_seed(21);
    let mut total = 0usize;
    let mut bad = 0usize;
    for net_idx in 0..20 {
        let arch: Vec<usize> = match net_idx % 4 {
            0 => vec![139, 3, 3, 3, 3, 3, 3, 3, 1],
            1 => vec![9, 6, 5, 1],
            2 => vec![5, 4, 4, 4, 1],
            _ => vec![17, 8, 1],
        };
        let params = NetworkParams::he_init(&arch, &mut state);

        // nudge inputs off ReLU kinks
        let x: Vec<f64> = loop {
            let cand: Vec<f64> = (0..arch[0]).map(|_| state.next_standard_normal()).collect();
            if kink_margin(&params, &cand) > 1e-3 {
                break cand;
            }
        };
        let target = state.next_standard_normal();

        let (y, cache) = forward(&params, &x).unwrap();
        let analytic = flatten(&backward(&params, &cache, y - target));

        let template = params.clone();
        let x_for_loss = x.clone();
        let loss = move |flat: &[f64]| -> f64 {
            let p = unflatten(&template, flat);
            let (y, _) = forward(&p, &x_for_loss).unwrap();
            0.5 * (y - target) * (y - target)
        };
        let numeric = finite_diff_gradient(loss, &flatten(&params), 1e-5);

        assert_eq!(analytic.len(), numeric.len());
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            total += 1;
            let abs = (a - n).abs();
            let ok = abs <= 1e-6 || abs <= 1e-4 * n.abs().max(a.abs());
            if !ok {
                bad += 1;
            }
        }
    }
    let frac_ok = 1.0 - bad as f64 / total as f64;
    assert!(
        frac_ok >= 0.99,
        "gradient agreement {frac_ok:.4} over {total} coordinates ({bad} bad)"
    );
}

#[test]
fn training_loss_decreases_from_first_to_final_epoch() {
    // optimization sanity across 20 seeds; >= 95% must improve
    let mut wins = 0;
    for seed in 0..20u64 {
        let mut state = RandomState::from_seed(1000 + seed);
        let n = 64;
        let design = Array2::from_shape_fn((n, 5), |_| state.next_f64());
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                let r = design.row(i);
                (3.0 * r[0]).sin() + r[1] * r[2] - 0.5 * r[4]
            })
            .collect();
        let init = NetworkParams::he_init(&[5, 16, 16, 1], &mut state);
        let cfg = TrainConfig {
            epochs: 60,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let (_, trace) = train(init, &design, &targets, &cfg, &state).unwrap();
        if trace.train_mse.last().unwrap() < trace.train_mse.first().unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 19, "loss decreased in only {wins}/20 runs");
}

#[test]
fn transfer_identity_zero_epoch_finetune_is_a_no_op() {
    let mut state = RandomState::from_seed(5);
    let pretrained = NetworkParams::he_init(&[6, 8, 8, 1], &mut state);
    let design = Array2::from_shape_fn((12, 6), |_| state.next_f64());
    let targets: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let (out, trace) = train(pretrained.clone(), &design, &targets, &cfg, &state).unwrap();
    assert_eq!(out, pretrained);
    assert!(trace.train_mse.is_empty());
}
