//! Move classification, cohort generation and the remove-manipulation
//! counterfactual checked against binomial oracles and conservation laws.

use std::collections::BTreeMap;

use envymarket_core::instances::displacement;
use envymarket_core::market::{Address, Mechanism, StudentId};
use envymarket_core::policy::{
    classify_moves, generate_cohort, generate_panel, rep_outcome, run_counterfactual, CounterfactualOptions, MoveEvent,
};
use envymarket_core::scenario::parse_scenario;
use proptest::prelude::*;

fn probs(p: f64) -> BTreeMap<u8, f64> {
    (0..8).map(|g| (g, p)).collect()
}

fn mover(id: u32, treated_post: bool, household_move: bool) -> MoveEvent {
    MoveEvent {
        student: StudentId(id),
        from: Address::new(0.0, 0.0),
        to: Address::new(1.0, 0.0),
        day_offset: 10,
        household_move,
        to_relative: true,
        action: 1,
        treated_post,
        subgroup: (id % 8) as u8,
    }
}

/// |k − np| ≤ 3·sqrt(npq).
fn within_binomial(k: usize, n: usize, p: f64) -> bool {
    let n = n as f64;
    (k as f64 - n * p).abs() <= 3.0 * (n * p * (1.0 - p)).sqrt()
}

#[test]
fn classifier_flags_a_binomial_share() {
    let events: Vec<MoveEvent> = (0..10_000).map(|i| mover(i, true, false)).collect();
    let flagged = classify_moves(&events, &probs(0.5), 17).unwrap();
    assert!(within_binomial(flagged.len(), 10_000, 0.5), "{}", flagged.len());
}

#[test]
fn classifier_ignores_ineligible_moves() {
    let mut events: Vec<MoveEvent> = (0..200).map(|i| mover(i, false, false)).collect();
    events.extend((200..400).map(|i| mover(i, true, true)));
    assert!(classify_moves(&events, &probs(1.0), 3).unwrap().is_empty());
}

fn scenario(rate: f64, seed: u64) -> envymarket_core::scenario::Scenario {
    parse_scenario(&format!(
        r#"{{"population": {{"n_students": 400, "cohorts": [2011, 2013]}},
             "geography": {{"n_schools": 6, "n_municipalities": 10}},
             "simulation": {{"strategic_move_rate": {rate}, "master_seed": {seed}}}}}"#
    ))
    .unwrap()
}

#[test]
fn strategic_moves_follow_the_configured_rate() {
    let rate = 0.4;
    let (mut flipped, mut strategic) = (0, 0);
    for seed in 0..50 {
        let c = generate_cohort(&scenario(rate, seed), 2013).unwrap();
        for (f, s) in c.flipped.iter().zip(&c.strategic) {
            assert!(!s || *f, "strategic mover without a deceptive best response");
            flipped += *f as usize;
            strategic += *s as usize;
        }
    }
    assert!(flipped > 100, "too few deceptive best responses: {flipped}");
    assert!(within_binomial(strategic, flipped, rate), "{strategic} of {flipped}");
}

#[test]
fn counterfactual_conserves_mass_on_a_generated_cohort() {
    let s = scenario(1.0, 9);
    let c = generate_cohort(&s, 2013).unwrap();
    let opts = CounterfactualOptions { reps: 12, master_seed: 9, ..Default::default() };
    let report = run_counterfactual(&c.economy, &c.rols, &c.events, &probs(0.6), &opts).unwrap();
    assert_eq!(report.per_rep.len(), 12);
    for r in &report.per_rep {
        let total = r.winners_mass + r.losers_mass + r.unaffected_mass;
        assert!((total - report.total_mass).abs() < 1e-9, "rep {}: {total}", r.rep);
        assert!((0.0..=1.0).contains(&r.envy_share));
    }
    let total = report.winners.mass + report.losers.mass + report.unaffected.mass;
    assert!((total - report.total_mass).abs() < 1e-9);
}

#[test]
fn zero_probability_reproduces_the_baseline() {
    let s = scenario(1.0, 4);
    let c = generate_cohort(&s, 2013).unwrap();
    for mechanism in [Mechanism::Ia, Mechanism::Da] {
        let opts = CounterfactualOptions { reps: 3, master_seed: 4, mechanism, ..Default::default() };
        let report = run_counterfactual(&c.economy, &c.rols, &c.events, &probs(0.0), &opts).unwrap();
        for r in &report.per_rep {
            assert_eq!((r.n_flagged, r.n_changed), (0, 0));
            assert_eq!(r.winners_mass + r.losers_mass, 0.0);
        }
        let (base, cf) = rep_outcome(&c.economy, &c.rols, &c.events, &probs(0.0), &opts, 1).unwrap();
        assert_eq!(base.assignment, cf.assignment);
    }
}

#[test]
fn displaced_applicant_wins_in_every_rep() {
    let (e, rols, events) = displacement();
    let opts = CounterfactualOptions { reps: 100, ..Default::default() };
    let report = run_counterfactual(&e, &rols, &events, &probs(1.0), &opts).unwrap();
    assert!(report.per_rep.iter().all(|r| r.winners_mass == 1.0 && r.losers_mass == 1.0));
    assert!(report.winners.peer_gpa_counterfactual > report.winners.peer_gpa_baseline);
}

#[test]
fn generation_is_deterministic_across_runs() {
    let s = scenario(0.5, 12);
    let (wa, ca, pa) = generate_panel(&s).unwrap();
    let (wb, cb, pb) = generate_panel(&s).unwrap();
    assert_eq!(wa, wb);
    assert_eq!(ca, cb);
    assert_eq!(pa, pb);
    let opts = CounterfactualOptions { reps: 5, master_seed: 12, ..Default::default() };
    let c = &ca[1];
    let a = run_counterfactual(&c.economy, &c.rols, &c.events, &probs(0.5), &opts).unwrap();
    let b = run_counterfactual(&c.economy, &c.rols, &c.events, &probs(0.5), &opts).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flagged_movers_are_eligible(n in 1u32..200, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let events: Vec<MoveEvent> = (0..n).map(|i| mover(i, i % 3 != 0, i % 5 == 0)).collect();
        let flagged = classify_moves(&events, &probs(p), seed).unwrap();
        for id in &flagged {
            let ev = &events[id.0 as usize];
            prop_assert!(ev.treated_post && !ev.household_move);
        }
    }

    #[test]
    fn flagging_is_monotone_in_probability(p in 0.0f64..0.5, seed in any::<u64>()) {
        let events: Vec<MoveEvent> = (0..300).map(|i| mover(i, true, false)).collect();
        let low = classify_moves(&events, &probs(p), seed).unwrap();
        let high = classify_moves(&events, &probs(p + 0.5), seed).unwrap();
        prop_assert!(low.is_subset(&high));
    }
}
