//! Compares the data-parallel BER sweep against the sequential fallback on
//! an identical workload. Both paths aggregate integer (bits, errors) pairs
//! from per-trial seeds, so their reports are byte-identical; the bench
//! shows what the rayon dispatch costs or saves on the host at hand.

use chaoscomm_core::channel::{monte_carlo, monte_carlo_seq, NoiseSpec};
use chaoscomm_core::chaos::{
    run_sync, ChaosConfig, ChaoticState, DEFAULT_MASTER_X0, DEFAULT_P_HAT0, DEFAULT_SLAVE_X0,
};
use chaoscomm_core::fhss::{FhssConfig, FhssLinkSim};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use std::time::Duration;

fn bench_sweeps(c: &mut Criterion) {
    let chaos_cfg = ChaosConfig::default();
    let dt = 1.0 / 450e6;
    let cfg = FhssConfig { hold: 1000, warmup_hops: 14, ..FhssConfig::default() };
    let bits_per_trial = 16usize;
    let n = (cfg.warmup_hops + bits_per_trial + 1) * cfg.hold;

    let master0 = ChaoticState::new(DEFAULT_MASTER_X0, chaos_cfg.params.as_array(), 0.0);
    let slave0 = ChaoticState::new(DEFAULT_SLAVE_X0, DEFAULT_P_HAT0, 0.0);
    let trace = run_sync(&chaos_cfg, &master0, &slave0, n, dt).expect("trace");

    let sim = FhssLinkSim { cfg: cfg.clone(), trace: &trace, bits_per_trial };
    let grid = [NoiseSpec::from_snr_db(10.0, 0), NoiseSpec::from_snr_db(20.0, 0)];
    let trials = 8u32;
    let eb = cfg.bit_amplitude * cfg.bit_amplitude;

    let mut group = c.benchmark_group("ber_sweep");
    group.sample_size(10).measurement_time(Duration::from_secs(6));
    group.bench_function("parallel", |b| {
        b.iter(|| monte_carlo(black_box(&sim), &grid, trials, 42, eb).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| monte_carlo_seq(black_box(&sim), &grid, trials, 42, eb).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_sweeps);
criterion_main!(benches);
