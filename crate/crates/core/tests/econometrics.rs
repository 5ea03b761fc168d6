//! Fixed-effects OLS against a dense-matrix oracle, estimator properties and
//! recovery of planted effects.

mod common {
    pub mod ols_oracle;
}

use common::ols_oracle::{hand_panel, WITHOUT_FE, WITH_FE};
use envymarket_core::econometrics::{
    design_matrix, fit_did, fit_ols, fit_ols_fe, manipulation_probability, run_placebo, spec_curve, DidSpec,
    RegressionFit, SubgroupFilter, Treatment,
};
use envymarket_core::policy::{simulate_planted_panel, PanelDgp, PlantedEffects};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn check_against(fit: &RegressionFit, oracle: &[(&str, f64, f64)]) {
    assert_eq!(fit.names.len(), oracle.len(), "{:?}", fit.names);
    for &(name, b, se) in oracle {
        let (fb, fse) = fit.coefficient(name).unwrap_or_else(|| panic!("missing {name}"));
        assert!(rel(fb, b) < 1e-8, "{name}: {fb} vs {b}");
        assert!(rel(fse, se) < 1e-8, "{name} se: {fse} vs {se}");
    }
}

#[test]
fn hand_panel_matches_oracle_with_fe() {
    let fit = fit_ols_fe(&hand_panel(), &DidSpec::default()).unwrap();
    check_against(&fit, WITH_FE);
    assert_eq!((fit.n_obs, fit.n_clusters), (40, 5));
}

#[test]
fn hand_panel_matches_oracle_without_fe() {
    let fit = fit_ols_fe(&hand_panel(), &DidSpec { fixed_effects: false, ..Default::default() }).unwrap();
    check_against(&fit, WITHOUT_FE);
}

/// Same numbers from the normal equations solved densely here.
#[test]
fn sparse_design_matches_dense_normal_equations() {
    let (design, y, _) = design_matrix(&hand_panel(), &DidSpec::default()).unwrap();
    let x = design.to_dense();
    let xtx = x.transpose() * &x;
    let b = xtx.clone().lu().solve(&(x.transpose() * DVector::from_vec(y.clone()))).unwrap();
    let fit = fit_ols_fe(&hand_panel(), &DidSpec::default()).unwrap();
    for (k, &c) in fit.coefficients.iter().enumerate() {
        assert!((c - b[k]).abs() < 1e-9 * (1.0 + b[k].abs()));
    }
}

#[test]
fn residuals_are_orthogonal_to_regressors() {
    let panel = simulate_planted_panel(&PanelDgp { students_per_cell: 40, ..Default::default() }, 3).panel;
    let spec = DidSpec::default();
    let (design, y, clusters) = design_matrix(&panel, &spec).unwrap();
    let fit = fit_ols(&design, &y, &clusters).unwrap();
    let x = design.to_dense();
    // Unit-scale each column before checking X'e.
    let e = DVector::from_vec(fit.residuals.clone());
    for c in 0..x.ncols() {
        let col = x.column(c);
        let scale = col.amax().max(1e-12);
        let dot = col.dot(&e) / scale;
        assert!(dot.abs() <= 1e-8, "{}: {dot}", design.names[c]);
    }
}

#[test]
fn cr1_covariance_is_symmetric_psd() {
    let panel = simulate_planted_panel(&PanelDgp { students_per_cell: 30, ..Default::default() }, 8).panel;
    let fit = fit_ols_fe(&panel, &DidSpec::default()).unwrap();
    let k = fit.covariance.len();
    let v = DMatrix::from_fn(k, k, |i, j| fit.covariance[i][j]);
    assert_eq!(v, v.transpose());
    let min = v.symmetric_eigenvalues().min();
    let max = v.symmetric_eigenvalues().max();
    assert!(min >= -1e-12 * max.abs().max(1.0), "min eigenvalue {min}");
}

#[test]
fn shifting_the_outcome_moves_only_the_intercept() {
    let (design, y, clusters) = design_matrix(&hand_panel(), &DidSpec::default()).unwrap();
    let a = fit_ols(&design, &y, &clusters).unwrap();
    let shifted: Vec<f64> = y.iter().map(|v| v + 3.25).collect();
    let b = fit_ols(&design, &shifted, &clusters).unwrap();
    let icpt = a.index_of("intercept").unwrap();
    for k in 0..a.coefficients.len() {
        let diff = b.coefficients[k] - a.coefficients[k];
        if k == icpt {
            assert!((diff - 3.25).abs() < 1e-9);
        } else {
            assert!(diff.abs() < 1e-9, "{}", a.names[k]);
        }
    }
    for (sa, sb) in a.std_errors().iter().zip(b.std_errors()) {
        assert!((sa - sb).abs() < 1e-9);
    }
}

#[test]
fn planted_effect_is_recovered_on_average() {
    let dgp = PanelDgp { students_per_cell: 150, ..Default::default() };
    let betas: Vec<f64> = (0..30)
        .map(|seed| fit_ols_fe(&simulate_planted_panel(&dgp, seed).panel, &DidSpec::default()).unwrap().beta)
        .collect();
    let n = betas.len() as f64;
    let mean = betas.iter().sum::<f64>() / n;
    let sd = (betas.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 0.006).abs() <= 3.0 * sd / n.sqrt(), "mean {mean}, sd {sd}");
}

#[test]
fn placebo_without_effect_is_centered() {
    let dgp = PanelDgp { students_per_cell: 150, ..Default::default() };
    let betas: Vec<f64> = (0..30)
        .map(|seed| run_placebo(&simulate_planted_panel(&dgp, seed).panel, &DidSpec::default()).unwrap().beta)
        .collect();
    let n = betas.len() as f64;
    let mean = betas.iter().sum::<f64>() / n;
    let sd = (betas.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / n.sqrt(), "mean {mean}, sd {sd}");
}

/// Effect planted in the top decile of demand only. Wider treatment
/// definitions mix in untreated municipalities and dilute the estimate in
/// proportion to the overlap: 4 of 4, 4 of 10 and 4 of 20 municipalities.
#[test]
fn broader_treatment_dilutes_the_estimate() {
    let effect = 0.05;
    let dgp = PanelDgp {
        treated_quantile: 0.9,
        students_per_cell: 300,
        effects: PlantedEffects::Uniform(effect),
        ..Default::default()
    };
    let panel = simulate_planted_panel(&dgp, 21).panel;
    let variants: Vec<DidSpec> = [0.9, 0.75, 0.5]
        .into_iter()
        .map(|q| DidSpec { treatment: Treatment::DemandAbove { quantile: q }, ..Default::default() })
        .collect();
    let rows = spec_curve(&panel, &variants).unwrap();
    let fits: Vec<&RegressionFit> = rows.iter().map(|r| r.fit.as_ref().unwrap()).collect();
    assert!(fits[0].beta > fits[1].beta && fits[1].beta > fits[2].beta);
    for (fit, overlap) in fits.iter().zip([1.0, 0.4, 0.2]) {
        assert!((fit.beta - effect * overlap).abs() <= 3.0 * fit.beta_se, "{} vs {}", fit.beta, effect * overlap);
    }
}

#[test]
fn single_variant_sweep_equals_direct_fit() {
    let panel = simulate_planted_panel(&PanelDgp { students_per_cell: 20, ..Default::default() }, 2).panel;
    let spec = DidSpec::default();
    let rows = spec_curve(&panel, &[spec]).unwrap();
    assert_eq!(rows[0].fit.as_ref().unwrap(), &fit_ols_fe(&panel, &spec).unwrap());
}

#[test]
fn fixed_effects_do_not_move_beta_on_a_balanced_panel() {
    let panel = simulate_planted_panel(&PanelDgp { students_per_cell: 200, ..Default::default() }, 5).panel;
    let on = fit_ols_fe(&panel, &DidSpec::default()).unwrap();
    let off = fit_ols_fe(&panel, &DidSpec { fixed_effects: false, ..Default::default() }).unwrap();
    assert!((on.beta - off.beta).abs() <= 3.0 * on.beta_se.max(off.beta_se));
}

#[test]
fn published_share_is_reproduced_from_rounded_inputs() {
    // Interaction 0.013 over a treated-post mover share of 0.019 against a
    // reported share of 0.696 computed from unrounded inputs.
    let p = manipulation_probability(0.013, 0.019).unwrap();
    assert!((p - 0.696).abs() <= 0.02, "{p}");
}

#[test]
fn subgroup_share_recovers_planted_share() {
    let dgp = PanelDgp {
        base_rate: 0.03,
        students_per_cell: 2000,
        effects: PlantedEffects::SharesBySubgroup([0.5; 8]),
        ..Default::default()
    };
    let planted = simulate_planted_panel(&dgp, 4);
    let r = fit_did(&planted.panel, &SubgroupFilter::default(), &DidSpec::default()).unwrap();
    assert!((r.share - 0.5).abs() < 0.1, "{}", r.share);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interaction_is_invariant_to_outcome_shift(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let panel = simulate_planted_panel(&PanelDgp { students_per_cell: 5, ..Default::default() }, seed).panel;
        let (design, y, clusters) = design_matrix(&panel, &DidSpec::default()).unwrap();
        let a = fit_ols(&design, &y, &clusters).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let b = fit_ols(&design, &y2, &clusters).unwrap();
        let k = a.index_of("treated_x_post").unwrap();
        prop_assert!((a.coefficients[k] - b.coefficients[k]).abs() < 1e-9);
        prop_assert!((a.std_errors()[k] - b.std_errors()[k]).abs() < 1e-9);
    }
}
