use std::time::Instant;
use sntl::basis::{build_basis, default_level_specs, Location};
use sntl::experiment::ExperimentConfig;
use sntl::net::{self, NetworkParams, TrainConfig};
use sntl::numerics::RandomState;
use sntl::surfaces::StationarySurface;

#[test]
#[ignore]
fn timing_probe() {
    let cfg = ExperimentConfig::default();
    let basis = build_basis(&default_level_specs()).unwrap();

    // 1. stationary source generation (4900-point cholesky)
    let t0 = Instant::now();
    let rep_cfg = cfg.replicate_config(25);
    let surface = StationarySurface::generate(&rep_cfg, &RandomState::from_seed(1)).unwrap();
    println!("source generation (n=4900): {:?}", t0.elapsed());

    // 2. conditional extension to 225 + 2000 points
    let mut state = RandomState::from_seed(2);
    let probes: Vec<Location> = (0..2225).map(|_| Location::new(state.next_f64(), state.next_f64())).collect();
    let t0 = Instant::now();
    let ext = surface.extend_signal(&probes, &mut state).unwrap();
    println!("conditional extension (m=2225): {:?} (first={})", t0.elapsed(), ext[0]);

    // 3. embedding of the full source grid
    let t0 = Instant::now();
    let locs = sntl::surfaces::grid_locations(70);
    let design = basis.embed_batch(&locs);
    println!("embed 4900x139: {:?}", t0.elapsed());

    // 4. pretraining epochs (measure 30, scale to 1500)
    let arch = net::default_architecture(basis.total_dim());
    let init = NetworkParams::he_init(&arch, &mut RandomState::from_seed(3));
    let targets: Vec<f64> = surface.source().observed.clone();
    let tc = TrainConfig { epochs: 30, validation_fraction: 0.2, ..TrainConfig::default() };
    let t0 = Instant::now();
    let (_, trace) = net::train(init.clone(), &design, &targets, &tc, &RandomState::from_seed(4)).unwrap();
    let dt = t0.elapsed();
    println!("30 pretrain epochs (3920 train rows): {:?}  -> 1500 epochs ~ {:?}", dt, dt * 50);
    println!("  epoch-1 mse {} epoch-30 mse {}", trace.train_mse[0], trace.train_mse[29]);

    // 5. fine-tune 1000 epochs at n=225 and n=25
    for n in [225usize, 25] {
        let sub: Vec<Location> = (0..n).map(|i| locs[i * 20 + 3]).collect();
        let x = basis.embed_batch(&sub);
        let y: Vec<f64> = (0..n).map(|i| targets[i * 20 + 3]).collect();
        let tc = TrainConfig { epochs: 1000, ..TrainConfig::default() };
        let t0 = Instant::now();
        let _ = net::train(init.clone(), &x, &y, &tc, &RandomState::from_seed(5)).unwrap();
        println!("finetune 1000 epochs n={n}: {:?}", t0.elapsed());
    }
}
