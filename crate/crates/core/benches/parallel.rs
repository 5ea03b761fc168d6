//! Data-parallel core against a single worker: aggregate demand over a large
//! market and a batch of counterfactual repetitions. The single-worker case
//! runs the same code inside a one-thread pool; build with
//! `--no-default-features` for the plain sequential path.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use envymarket_core::equilibrium::{aggregate_demand, solve_equilibrium, SolverOptions};
use envymarket_core::instances::{random_economy, RandomSpec};
use envymarket_core::policy::{generate_cohort, run_counterfactual, CounterfactualOptions};
use envymarket_core::scenario::parse_scenario;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let all = rayon::ThreadPoolBuilder::new().build().expect("pool");
    vec![("1-thread", one), ("all-threads", all)]
}

fn demand(c: &mut Criterion) {
    let spec =
        RandomSpec { n_students: 20_000, n_schools: 20, n_actions: 3, capacity: (500, 1500), ..Default::default() };
    let e = random_economy(&spec, 1);
    let cutoffs = solve_equilibrium(&e, &SolverOptions::default()).cutoffs;
    let mut group = c.benchmark_group("aggregate_demand");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new(name, e.n_students()), |b| {
            pool.install(|| b.iter(|| aggregate_demand(&e, &cutoffs)))
        });
    }
    group.finish();
}

fn counterfactual(c: &mut Criterion) {
    let s = parse_scenario(
        r#"{"population": {"n_students": 4000, "cohorts": [2013]},
            "geography": {"n_schools": 20, "n_municipalities": 20},
            "simulation": {"strategic_move_rate": 0.5}}"#,
    )
    .expect("valid scenario");
    let cohort = generate_cohort(&s, 2013).expect("cohort");
    let probs: BTreeMap<u8, f64> = (0..8).map(|g| (g, 0.5)).collect();
    let opts = CounterfactualOptions { reps: 32, ..Default::default() };
    let mut group = c.benchmark_group("counterfactual_reps");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new(name, opts.reps), |b| {
            pool.install(|| {
                b.iter(|| run_counterfactual(&cohort.economy, &cohort.rols, &cohort.events, &probs, &opts).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, demand, counterfactual);
criterion_main!(benches);
