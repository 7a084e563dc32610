//! Criterion benches comparing the rayon-backed and sequential code paths
//! for the data-parallel solver stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use optomech::dynamics::{integrate_reduced, DEFAULT_STEP};
use optomech::exec::{ordered_map, ordered_map_seq};
use optomech::geometry::ReducedState;
use optomech::solver::{simulate_structure, CandidateStructure, SolveOptions};
use optomech::ControlProfile;

/// A batch of structure evaluations like the ones the switch-time seed grid
/// fans out.
fn seed_batch() -> Vec<Vec<f64>> {
    let t = std::f64::consts::PI;
    (0..48)
        .map(|i| {
            let a = 0.1 + 0.7 * (i as f64) / 48.0;
            vec![a * t * 0.5, (a * 0.5 + 0.45) * t]
        })
        .collect()
}

fn bench_seed_fanout(c: &mut Criterion) {
    let cand = CandidateStructure::Bbb { first_sign: 1.0 };
    let t = std::f64::consts::PI;
    let eval = move |times: Vec<f64>| {
        simulate_structure(1.0, t, &cand, &times, 1e-3).map(|s| s.q_final.q1)
    };

    let mut group = c.benchmark_group("seed_fanout");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", 48), |b| {
        b.iter(|| ordered_map_seq(seed_batch(), eval))
    });
    #[cfg(feature = "parallel")]
    group.bench_function(BenchmarkId::new("parallel", 48), |b| {
        b.iter(|| ordered_map(seed_batch(), eval))
    });
    group.finish();
}

fn bench_integrator(c: &mut Criterion) {
    let profile = ControlProfile::from_switch_times(
        &[1.0, -1.0, 1.0],
        &[1.0, 2.4],
        std::f64::consts::PI,
        1.0,
    )
    .unwrap();
    c.bench_function("integrate_reduced_pi", |b| {
        b.iter(|| integrate_reduced(&profile, ReducedState::ORIGIN, DEFAULT_STEP).unwrap())
    });
}

fn bench_sweep(c: &mut Criterion) {
    use optomech::solver::{sweep, SweepAxis};
    let values: Vec<f64> = (0..6).map(|i| 1.2 + 0.2 * i as f64).collect();

    let mut group = c.benchmark_group("sweep_switch");
    group.sample_size(10);
    let mut opts = SolveOptions::default();
    opts.step_final = 1e-3;
    opts.step_coarse = 2e-3;

    let mut seq_opts = opts.clone();
    seq_opts.workers = 1;
    group.bench_function("workers_1", |b| {
        b.iter(|| sweep(SweepAxis::Horizon, &values, 2.0, "switch", &seq_opts))
    });
    #[cfg(feature = "parallel")]
    {
        let mut par_opts = opts.clone();
        par_opts.workers = 0;
        group.bench_function("workers_all", |b| {
            b.iter(|| sweep(SweepAxis::Horizon, &values, 2.0, "switch", &par_opts))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_seed_fanout, bench_integrator, bench_sweep);
criterion_main!(benches);
