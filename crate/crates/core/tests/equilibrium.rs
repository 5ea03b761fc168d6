//! Cutoff solver: clearing, monotone sweeps, agreement with DA, the uniform
//! order-statistic oracle and decomposition signs.

use envymarket_core::deception::individual_demand;
use envymarket_core::equilibrium::{
    aggregate_demand, decompose_comparative_statics, demand_profile, is_market_clearing, multistart, solve_equilibrium,
    Parameter, SolverOptions, SweepOrder,
};
use envymarket_core::instances::{contested_seat, random_economy, single_school_uniform, RandomSpec};
use envymarket_core::market::{Cutoff, Economy, Mechanism};
use envymarket_core::mechanisms::{run_mechanism, Rols};
use proptest::prelude::*;

fn market(seed: u64, n: usize, w: Option<f64>) -> Economy {
    random_economy(
        &RandomSpec { n_students: n, n_schools: 4, n_actions: 3, capacity: (2, 6), w, ..Default::default() },
        seed,
    )
}

fn regime_market(seed: u64, n: usize, w: f64) -> Economy {
    random_economy(
        &RandomSpec {
            n_students: n,
            n_schools: 4,
            n_actions: 3,
            capacity: (2, 6),
            w: Some(w),
            monotone_regime: true,
            ..Default::default()
        },
        seed,
    )
}

#[test]
fn aggregate_demand_matches_summed_decisions() {
    let e = market(3, 100, Some(0.6));
    let cutoffs = solve_equilibrium(&e, &SolverOptions::default()).cutoffs;
    let agg = aggregate_demand(&e, &cutoffs);
    let mut per_school = vec![0.0; e.n_schools()];
    let mut deception = 0.0;
    for i in 0..e.n_students() {
        let d = individual_demand(&e, i, &cutoffs);
        if let Some(s) = d.demanded_school {
            per_school[s] += e.students[i].weight;
        }
        if d.with_deception {
            deception += e.students[i].weight;
        }
    }
    assert_eq!(agg.per_school, per_school);
    assert_eq!(agg.deception, deception);
}

#[test]
fn solver_output_clears_random_markets() {
    for seed in 0..60 {
        let e = market(seed, 80, None);
        let r = solve_equilibrium(&e, &SolverOptions::default());
        assert!(r.converged, "seed {seed}");
        assert!(is_market_clearing(&e, &r.cutoffs, 1e-9).clearing, "seed {seed}");
        assert!(r.aggregate_deception >= 0.0 && r.aggregate_deception <= e.total_mass());
    }
}

#[test]
fn gauss_seidel_sweeps_rise_monotonically() {
    for seed in 0..60 {
        let e = market(seed, 60, None);
        let r = solve_equilibrium(&e, &SolverOptions { record_trace: true, ..Default::default() });
        let trace = r.trace.unwrap();
        for pair in trace.windows(2) {
            for s in 0..e.n_schools() {
                assert!(pair[0].get(s).cmp_total(&pair[1].get(s)).is_le(), "seed {seed}, school {s}");
            }
        }
    }
}

#[test]
fn jacobi_agrees_with_gauss_seidel() {
    for seed in 0..20 {
        let e = market(seed, 60, None);
        let gs = solve_equilibrium(&e, &SolverOptions::default());
        let j = solve_equilibrium(&e, &SolverOptions { order: SweepOrder::Jacobi, ..Default::default() });
        assert!(j.converged);
        assert_eq!(gs.cutoffs, j.cutoffs, "seed {seed}");
    }
}

/// The assignment implied by the clearing cutoffs is what DA produces when
/// students list truthfully and register at their best-response actions.
#[test]
fn equilibrium_assignment_equals_da() {
    let mut checked = 0;
    for seed in 0..200 {
        let n = 5 + (seed as usize % 46);
        let e = market(seed, n, if seed % 2 == 0 { Some(0.0) } else { None });
        let r = solve_equilibrium(&e, &SolverOptions::default());
        assert!(r.converged);
        let decisions = demand_profile(&e, &r.cutoffs);
        let actions: Vec<usize> = decisions.iter().map(|d| d.action_used).collect();
        let da = run_mechanism(&e, Mechanism::Da, &Rols::truthful(&e, None), &actions, seed).unwrap();
        let da_schools = da.school_indices(&e).unwrap();
        let eq_schools: Vec<Option<usize>> = decisions.iter().map(|d| d.demanded_school).collect();
        assert_eq!(da_schools, eq_schools, "seed {seed}, w {}", e.w);
        checked += 1;
    }
    assert_eq!(checked, 200);
}

#[test]
fn uniform_single_school_cutoff() {
    let n = 10_000;
    let e = single_school_uniform(n, 0.3, 42);
    let r = solve_equilibrium(&e, &SolverOptions::default());
    let Cutoff::Finite(c) = r.cutoffs.get(0) else { panic!("cutoff should bind") };
    assert!((c - 0.7).abs() <= 3.0 / (n as f64).sqrt(), "cutoff {c}");
}

#[test]
fn contested_seat_equilibrium() {
    let e = contested_seat(1.0, 0.3);
    let r = solve_equilibrium(&e, &SolverOptions::default());
    assert_eq!(r.cutoffs.get(0), Cutoff::Finite(1.0));
    assert_eq!(r.aggregate_deception, 1.0);
}

#[test]
fn multistart_agrees_on_random_markets() {
    for seed in 0..10 {
        let e = market(seed, 200, None);
        let rep = multistart(&e, 10, seed, &SolverOptions::default());
        assert!(rep.agree, "seed {seed}: discrepancy {}", rep.max_discrepancy);
    }
}

/// At frozen cutoffs, raising `w` can only add deceivers when the regime holds
/// for every student; raising `gamma` can only remove them in any economy.
#[test]
fn decomposition_direct_effect_signs() {
    for seed in 0..20 {
        let e = regime_market(seed, 150, 0.5);
        let w = decompose_comparative_statics(&e, Parameter::W, 0.05, &SolverOptions::default()).unwrap();
        assert!(w.direct >= 0.0, "seed {seed}: {w:?}");
        let g = decompose_comparative_statics(&e, Parameter::Gamma, 0.05 * e.gamma, &SolverOptions::default()).unwrap();
        assert!(g.direct <= 0.0, "seed {seed}: {g:?}");
        assert!((w.total - w.direct - w.general_equilibrium).abs() < 1e-9);
    }
}

#[test]
fn gamma_direct_effect_is_never_positive() {
    for seed in 0..20 {
        let e = market(seed, 150, Some(0.8));
        let g = decompose_comparative_statics(&e, Parameter::Gamma, 0.05 * e.gamma, &SolverOptions::default()).unwrap();
        assert!(g.direct <= 0.0, "seed {seed}: {g:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_clears(seed in any::<u64>(), n in 1usize..60, w in 0.0f64..=1.0) {
        let e = market(seed, n, Some(w));
        let r = solve_equilibrium(&e, &SolverOptions::default());
        prop_assert!(r.converged);
        let report = is_market_clearing(&e, &r.cutoffs, 1e-9);
        prop_assert!(report.clearing, "{:?}", report.violations);
    }
}
