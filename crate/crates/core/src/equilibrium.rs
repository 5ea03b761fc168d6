//! Aggregate demand, market-clearing cutoffs and comparative statics of
//! aggregate deception.
//!
//! The solver iterates a cutoff operator school by school. For school `s`,
//! each type's *entry threshold* is the highest own cutoff at which it still
//! demands `s` (given the other cutoffs): its entry-maximizing priority when
//! deceptive entry is its best option there, its null-action priority when
//! only clean entry is worth it, and nothing otherwise. The new cutoff is the
//! threshold at which the admitted mass first reaches capacity, or
//! `Unconstrained` when total threshold mass falls short. Because individual
//! demand is monotone and satisfies gross substitutes, thresholds never fall
//! when other cutoffs rise, so iterating from all-`Unconstrained` produces a
//! non-decreasing cutoff sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deception::{choose, reaches, DemandDecision, Reach};
use crate::error::{Error, Result};
use crate::exec;
use crate::market::{Cutoff, CutoffVector, Economy};
use crate::seed::{rng_for, Stream};

/// Default market-clearing tolerance, in student mass.
pub const TAU_CLEAR: f64 = 1e-9;

/// Demand and deception mass at a cutoff vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateDemand {
    pub per_school: Vec<f64>,
    pub unmatched: f64,
    pub deception: f64,
}

/// Reachable priorities are cutoff-independent, so they are computed once.
pub(crate) struct Prepared<'a> {
    e: &'a Economy,
    reaches: Vec<Vec<Reach>>,
}

impl<'a> Prepared<'a> {
    pub fn new(e: &'a Economy) -> Self {
        Self { e, reaches: exec::map_range(e.n_students(), |i| reaches(e, i)) }
    }

    pub fn decide(&self, i: usize, cutoffs: &CutoffVector) -> DemandDecision {
        choose(&self.e.students[i].utilities, self.e.gamma_for(i), &self.reaches[i], |s| cutoffs.get(s))
    }

    pub fn decisions(&self, cutoffs: &CutoffVector) -> Vec<DemandDecision> {
        exec::map_range(self.e.n_students(), |i| self.decide(i, cutoffs))
    }

    /// Highest own cutoff at which student `i` still demands school `s`.
    fn threshold(&self, i: usize, s: usize, cutoffs: &CutoffVector) -> Option<f64> {
        let r = self.reaches[i][s];
        let demands_at = |level: f64| {
            let d = choose(&self.e.students[i].utilities, self.e.gamma_for(i), &self.reaches[i], |k| {
                if k == s {
                    Cutoff::Finite(level)
                } else {
                    cutoffs.get(k)
                }
            });
            d.demanded_school == Some(s)
        };
        if r.best > r.clean && demands_at(r.best) {
            Some(r.best)
        } else if demands_at(r.clean) {
            Some(r.clean)
        } else {
            None
        }
    }

    fn aggregate(&self, cutoffs: &CutoffVector) -> AggregateDemand {
        sum_decisions(self.e, &self.decisions(cutoffs))
    }

    /// Cutoff at `s` that clears it given the other cutoffs. Ties at the
    /// boundary are admitted as a block; the returned flag reports whether that
    /// block overshoots capacity by more than `tol`.
    fn clearing_cutoff(&self, s: usize, cutoffs: &CutoffVector, tol: f64) -> (Cutoff, bool) {
        let e = self.e;
        let capacity = e.schools[s].capacity;
        let mut entries: Vec<(f64, f64)> =
            exec::map_range(e.n_students(), |i| self.threshold(i, s, cutoffs).map(|t| (t, e.students[i].weight)))
                .into_iter()
                .flatten()
                .collect();
        entries.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut cum = 0.0;
        let mut k = 0;
        while k < entries.len() {
            let level = entries[k].0;
            while k < entries.len() && entries[k].0 == level {
                cum += entries[k].1;
                k += 1;
            }
            if cum >= capacity - tol {
                return (Cutoff::Finite(level), cum > capacity + tol);
            }
        }
        (Cutoff::Unconstrained, false)
    }
}

fn sum_decisions(e: &Economy, decisions: &[DemandDecision]) -> AggregateDemand {
    let mut out = AggregateDemand { per_school: vec![0.0; e.n_schools()], unmatched: 0.0, deception: 0.0 };
    for (st, d) in e.students.iter().zip(decisions) {
        match d.demanded_school {
            Some(s) => out.per_school[s] += st.weight,
            None => out.unmatched += st.weight,
        }
        if d.with_deception {
            out.deception += st.weight;
        }
    }
    out
}

/// Weighted sum of individual demand; summation runs in student order.
pub fn aggregate_demand(e: &Economy, cutoffs: &CutoffVector) -> AggregateDemand {
    Prepared::new(e).aggregate(cutoffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearingFailure {
    /// Demand above capacity.
    OverCapacity,
    /// Finite cutoff at a school whose demand falls short of capacity.
    UnfilledAtFiniteCutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingViolation {
    pub school: usize,
    pub kind: ClearingFailure,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingReport {
    pub clearing: bool,
    pub residual: f64,
    pub violations: Vec<ClearingViolation>,
}

fn clearing_report(e: &Economy, cutoffs: &CutoffVector, demand: &AggregateDemand, tol: f64) -> ClearingReport {
    let mut violations = Vec::new();
    let mut residual: f64 = 0.0;
    for (s, school) in e.schools.iter().enumerate() {
        let d = demand.per_school[s];
        let over = d - school.capacity;
        if over > 0.0 {
            residual = residual.max(over);
        }
        if over > tol {
            violations.push(ClearingViolation { school: s, kind: ClearingFailure::OverCapacity, gap: over });
        }
        if cutoffs.get(s).is_finite() {
            let short = school.capacity - d;
            if short > 0.0 {
                residual = residual.max(short);
            }
            if short > tol {
                violations.push(ClearingViolation {
                    school: s,
                    kind: ClearingFailure::UnfilledAtFiniteCutoff,
                    gap: short,
                });
            }
        }
    }
    ClearingReport { clearing: violations.is_empty(), residual, violations }
}

/// Checks `D_s <= C_s` everywhere and `D_s = C_s` wherever the cutoff is finite.
pub fn is_market_clearing(e: &Economy, cutoffs: &CutoffVector, tol: f64) -> ClearingReport {
    clearing_report(e, cutoffs, &aggregate_demand(e, cutoffs), tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Schools updated in id order, each seeing the updates before it.
    #[default]
    GaussSeidel,
    /// All schools updated from the same previous vector.
    Jacobi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// Sweep limit; `None` means `10 * |S| * N`.
    pub max_iter: Option<usize>,
    pub order: SweepOrder,
    /// Initial cutoffs; `None` starts from all `Unconstrained`.
    pub start: Option<CutoffVector>,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: TAU_CLEAR, max_iter: None, order: SweepOrder::GaussSeidel, start: None, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub cutoffs: CutoffVector,
    pub aggregate_demand: Vec<f64>,
    pub aggregate_deception: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    /// A tied block admitted at some cutoff exceeded capacity by more than the tolerance.
    pub capacity_overshoot: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<CutoffVector>>,
}

/// Iterates the clearing operator until the market clears, the cutoffs stop
/// moving, or the sweep limit is hit. Non-convergence is reported through
/// `converged = false` with the residual.
pub fn solve_equilibrium(e: &Economy, opts: &SolverOptions) -> EquilibriumResult {
    let prep = Prepared::new(e);
    let n_s = e.n_schools();
    let max_iter = opts.max_iter.unwrap_or_else(|| (10 * n_s * e.n_students()).max(1));
    let mut cutoffs = opts.start.clone().unwrap_or_else(|| CutoffVector::unconstrained(n_s));
    let mut trace = opts.record_trace.then(|| vec![cutoffs.clone()]);
    let mut overshoot = vec![false; n_s];
    let mut iterations = 0;

    let mut demand = prep.aggregate(&cutoffs);
    let mut report = clearing_report(e, &cutoffs, &demand, opts.tol);
    while iterations < max_iter {
        iterations += 1;
        let previous = cutoffs.clone();
        for s in 0..n_s {
            let basis = match opts.order {
                SweepOrder::GaussSeidel => &cutoffs,
                SweepOrder::Jacobi => &previous,
            };
            let (c, over) = prep.clearing_cutoff(s, basis, opts.tol);
            overshoot[s] = over;
            cutoffs.set(s, c);
        }
        if let Some(t) = trace.as_mut() {
            t.push(cutoffs.clone());
        }
        demand = prep.aggregate(&cutoffs);
        report = clearing_report(e, &cutoffs, &demand, opts.tol);
        if report.clearing || cutoffs == previous {
            break;
        }
    }

    EquilibriumResult {
        cutoffs,
        aggregate_demand: demand.per_school,
        aggregate_deception: demand.deception,
        iterations,
        converged: report.clearing,
        residual: report.residual,
        capacity_overshoot: overshoot.iter().any(|&o| o),
        trace,
    }
}

/// Outcome of solving from several starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartReport {
    pub runs: Vec<EquilibriumResult>,
    pub starts: Vec<CutoffVector>,
    /// All runs converged and their cutoffs agree within `agreement_tol`.
    pub agree: bool,
    pub max_discrepancy: f64,
    pub agreement_tol: f64,
}

/// First start is all-`Unconstrained`; the rest draw each cutoff as
/// `Unconstrained` with probability 0.2 and uniform on `[0, 1]` otherwise.
pub fn random_starts(n_schools: usize, k: usize, seed: u64) -> Vec<CutoffVector> {
    let mut rng = rng_for(seed, Stream::Multistart, 0);
    (0..k)
        .map(|j| {
            if j == 0 {
                return CutoffVector::unconstrained(n_schools);
            }
            CutoffVector(
                (0..n_schools)
                    .map(
                        |_| {
                            if rng.random::<f64>() < 0.2 {
                                Cutoff::Unconstrained
                            } else {
                                Cutoff::Finite(rng.random())
                            }
                        },
                    )
                    .collect(),
            )
        })
        .collect()
}

/// Uniqueness diagnostic: solve from `k` starts and compare the cutoffs.
/// Disagreement is reported, not raised.
pub fn multistart(e: &Economy, k: usize, seed: u64, opts: &SolverOptions) -> MultistartReport {
    let starts = random_starts(e.n_schools(), k.max(1), seed);
    let runs: Vec<EquilibriumResult> = starts
        .iter()
        .map(|start| solve_equilibrium(e, &SolverOptions { start: Some(start.clone()), ..opts.clone() }))
        .collect();
    let max_discrepancy = runs.iter().map(|r| r.cutoffs.max_abs_diff(&runs[0].cutoffs)).fold(0.0, f64::max);
    let agreement_tol = 10.0 * opts.tol;
    MultistartReport {
        agree: runs.iter().all(|r| r.converged) && max_discrepancy <= agreement_tol,
        runs,
        starts,
        max_discrepancy,
        agreement_tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    W,
    Gamma,
}

impl Parameter {
    pub fn value(&self, e: &Economy) -> f64 {
        match self {
            Parameter::W => e.w,
            Parameter::Gamma => e.gamma,
        }
    }

    pub fn apply(&self, e: &Economy, value: f64) -> Economy {
        match self {
            Parameter::W => e.with_w(value),
            Parameter::Gamma => e.with_gamma(value),
        }
    }

    /// 0.05 for `w`, 5% of the current value for `gamma`.
    pub fn default_step(&self, e: &Economy) -> f64 {
        match self {
            Parameter::W => 0.05,
            Parameter::Gamma => 0.05 * e.gamma,
        }
    }
}

/// Forward-difference split of the marginal effect on aggregate deception
/// into the effect at frozen cutoffs and the effect through cutoff movement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub parameter: Parameter,
    pub base_value: f64,
    pub step: f64,
    /// The difference runs from `base_value - step` to `base_value`.
    pub backward: bool,
    pub total: f64,
    pub direct: f64,
    pub general_equilibrium: f64,
    pub base_deception: f64,
    pub shifted_deception: f64,
    pub frozen_deception: f64,
}

pub fn decompose_comparative_statics(
    e: &Economy,
    parameter: Parameter,
    h: f64,
    opts: &SolverOptions,
) -> Result<Decomposition> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let p0 = parameter.value(e);
    let in_domain = |x: f64| crate::market::validate_economy(&parameter.apply(e, x)).is_empty();
    // At the upper edge of the domain (w = 1) the difference is taken backward:
    // the same forward split, anchored at p0 - h.
    let (anchor, backward) = if in_domain(p0 + h) {
        (e.clone(), false)
    } else if in_domain(p0 - h) {
        (parameter.apply(e, p0 - h), true)
    } else {
        return Err(Error::InvalidInput(format!("{parameter:?} ± h leaves its domain")));
    };
    let e = &anchor;
    let shifted = parameter.apply(e, parameter.value(e) + h);
    let base = solve_equilibrium(e, opts);
    if !base.converged {
        return Err(Error::Solver(format!("baseline did not clear (residual {})", base.residual)));
    }
    let moved = solve_equilibrium(&shifted, opts);
    if !moved.converged {
        return Err(Error::Solver(format!("shifted economy did not clear (residual {})", moved.residual)));
    }
    let frozen = aggregate_demand(&shifted, &base.cutoffs).deception;
    let total = (moved.aggregate_deception - base.aggregate_deception) / h;
    let direct = (frozen - base.aggregate_deception) / h;
    Ok(Decomposition {
        parameter,
        base_value: p0,
        step: h,
        backward,
        total,
        direct,
        general_equilibrium: total - direct,
        base_deception: base.aggregate_deception,
        shifted_deception: moved.aggregate_deception,
        frozen_deception: frozen,
    })
}

/// Demand decisions at the given cutoffs, for building the equilibrium assignment.
pub fn demand_profile(e: &Economy, cutoffs: &CutoffVector) -> Vec<DemandDecision> {
    Prepared::new(e).decisions(cutoffs)
}
