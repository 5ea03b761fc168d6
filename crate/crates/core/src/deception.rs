//! Priority blending and the individual best response to fixed cutoffs.

use serde::{Deserialize, Serialize};

use crate::market::{Cutoff, CutoffVector, Economy, SchoolId, TIE_TOLERANCE};

/// Manipulable priority component: `1 - min(dist / d_max, 1)`.
pub fn manipulable_priority(e: &Economy, student: usize, school: usize, action: usize) -> f64 {
    1.0 - (e.distance(student, action, school) / e.d_max).min(1.0)
}

/// Realized priority `w * p_manip(action) + (1 - w) * p_exog`.
pub fn blend_priority(e: &Economy, student: usize, school: usize, action: usize) -> f64 {
    blend_with_w(e, e.w, student, school, action)
}

pub(crate) fn blend_with_w(e: &Economy, w: f64, student: usize, school: usize, action: usize) -> f64 {
    let manip = manipulable_priority(e, student, school, action);
    let exog = e.students[student].exog_priority[school];
    w * manip + (1.0 - w) * exog
}

/// Action with the highest realized priority at `school`; ties go to the
/// null action, then to the lowest index.
pub fn entry_maximizing_action(e: &Economy, student: usize, school: usize) -> usize {
    let mut best = 0;
    let mut best_p = blend_priority(e, student, school, 0);
    for a in 1..e.students[student].actions.len() {
        let p = blend_priority(e, student, school, a);
        if p > best_p {
            best = a;
            best_p = p;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandDecision {
    /// School index in the economy, `None` for unmatched.
    pub demanded_school: Option<usize>,
    pub with_deception: bool,
    pub action_used: usize,
    pub net_utility: f64,
}

impl DemandDecision {
    pub const UNMATCHED: DemandDecision =
        DemandDecision { demanded_school: None, with_deception: false, action_used: 0, net_utility: 0.0 };

    pub fn school_id(&self, e: &Economy) -> Option<SchoolId> {
        self.demanded_school.map(|s| e.schools[s].id)
    }
}

/// Realized priorities a student can reach at one school.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Reach {
    pub clean: f64,
    pub best_action: usize,
    pub best: f64,
}

pub(crate) fn reach(e: &Economy, student: usize, school: usize) -> Reach {
    let best_action = entry_maximizing_action(e, student, school);
    Reach {
        clean: blend_priority(e, student, school, 0),
        best_action,
        best: blend_priority(e, student, school, best_action),
    }
}

/// Best option on the menu defined by `reaches` and `cutoffs`.
///
/// Clean entry at `s` needs `v_s > 0` and the null-action priority to clear
/// the cutoff. Deceptive entry needs `v_s > gamma`, a failing null action and
/// a clearing entry-maximizing action. Net utility ties within
/// [`TIE_TOLERANCE`] resolve to clean entry.
pub(crate) fn choose(
    utilities: &[f64],
    gamma: f64,
    reaches: &[Reach],
    cutoff_at: impl Fn(usize) -> Cutoff,
) -> DemandDecision {
    let mut best = DemandDecision::UNMATCHED;
    for (s, r) in reaches.iter().enumerate() {
        let v = utilities[s];
        let cutoff = cutoff_at(s);
        let candidate = if cutoff.admits(r.clean) {
            if v <= 0.0 {
                continue;
            }
            DemandDecision { demanded_school: Some(s), with_deception: false, action_used: 0, net_utility: v }
        } else if r.best_action != 0 && cutoff.admits(r.best) && v > gamma {
            DemandDecision {
                demanded_school: Some(s),
                with_deception: true,
                action_used: r.best_action,
                net_utility: v - gamma,
            }
        } else {
            continue;
        };
        let better = candidate.net_utility > best.net_utility + TIE_TOLERANCE
            || ((candidate.net_utility - best.net_utility).abs() <= TIE_TOLERANCE
                && best.with_deception
                && !candidate.with_deception);
        if better {
            best = candidate;
        }
    }
    best
}

pub(crate) fn reaches(e: &Economy, student: usize) -> Vec<Reach> {
    (0..e.n_schools()).map(|s| reach(e, student, s)).collect()
}

/// Favourite affordable option (school and whether entry needs deception).
pub fn individual_demand(e: &Economy, student: usize, cutoffs: &CutoffVector) -> DemandDecision {
    let r = reaches(e, student);
    choose(&e.students[student].utilities, e.gamma_for(student), &r, |s| cutoffs.get(s))
}

/// Whether the best response at these cutoffs uses a non-null action.
pub fn optimal_deception(e: &Economy, student: usize, cutoffs: &CutoffVector) -> bool {
    individual_demand(e, student, cutoffs).with_deception
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::fixtures::*;
    use crate::market::{Address, DistanceMetric, School};

    fn two_school(w: f64, gamma: f64) -> Economy {
        // Home is 6 km from school 2; the relative's flat is right next to it.
        Economy {
            schools: vec![
                School { id: SchoolId(1), capacity: 1.0, location: Address::new(0.0, 0.0) },
                School { id: SchoolId(2), capacity: 1.0, location: Address::new(10.0, 0.0) },
            ],
            students: vec![student(
                1,
                vec![1.0, 2.0],
                vec![0.3, 0.4],
                vec![Address::new(4.0, 0.0), Address::new(10.0, 0.0)],
            )],
            w,
            gamma,
            metric: DistanceMetric::Euclidean,
            d_max: 10.0,
        }
    }

    #[test]
    fn w_zero_is_exogenous_priority() {
        let e = two_school(0.0, 0.5);
        for a in 0..2 {
            assert_eq!(blend_priority(&e, 0, 0, a), 0.3);
            assert_eq!(blend_priority(&e, 0, 1, a), 0.4);
        }
    }

    #[test]
    fn w_one_at_school_is_one() {
        let e = two_school(1.0, 0.5);
        assert_eq!(blend_priority(&e, 0, 1, 1), 1.0);
    }

    #[test]
    fn half_weight_arithmetic() {
        // p_manip = 1 - 2/10 = 0.8, p_exog = 0.4
        let mut e = two_school(0.5, 0.5);
        e.students[0].actions[0] = Address::new(8.0, 0.0);
        assert!((blend_priority(&e, 0, 1, 0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn entry_action_prefers_nearby_flat() {
        let mut e = two_school(0.7, 0.5);
        e.students[0].actions = vec![Address::new(0.0, 0.0), Address::new(9.5, 0.0)];
        assert_eq!(entry_maximizing_action(&e, 0, 1), 1);
        assert_eq!(entry_maximizing_action(&e.with_w(0.0), 0, 1), 0);
    }

    #[test]
    fn figure_panel_a_region_1_0() {
        // w = 0: P1 <= p_exog_1, P2 > p_exog_2 -> school 1 without deception.
        let e = two_school(0.0, 0.5);
        let cut = CutoffVector(vec![Cutoff::Finite(0.2), Cutoff::Finite(0.5)]);
        let d = individual_demand(&e, 0, &cut);
        assert_eq!(d.demanded_school, Some(0));
        assert!(!d.with_deception);
        assert_eq!(d.net_utility, 1.0);
    }

    #[test]
    fn figure_panel_b_region_2_1() {
        // w = 1: p(a0) at school 2 is 0.4, deception reaches 1.0; v2 - gamma > v1.
        let e = two_school(1.0, 0.5);
        let cut = CutoffVector(vec![Cutoff::Finite(0.2), Cutoff::Finite(0.7)]);
        let d = individual_demand(&e, 0, &cut);
        assert_eq!(d.demanded_school, Some(1));
        assert!(d.with_deception);
        assert_eq!(d.action_used, 1);
        assert_eq!(d.net_utility, 2.0 - 0.5);
    }

    #[test]
    fn nothing_affordable_is_unmatched() {
        let e = two_school(0.0, 0.5);
        let cut = CutoffVector(vec![Cutoff::Finite(0.9), Cutoff::Finite(0.9)]);
        assert_eq!(individual_demand(&e, 0, &cut), DemandDecision::UNMATCHED);
    }

    #[test]
    fn tie_resolves_to_clean_entry() {
        // v2 - gamma == v1 exactly: take school 1 without deception.
        let e = two_school(1.0, 1.0);
        let cut = CutoffVector(vec![Cutoff::Unconstrained, Cutoff::Finite(0.7)]);
        let d = individual_demand(&e, 0, &cut);
        assert_eq!(d.demanded_school, Some(0));
        assert!(!d.with_deception);
    }

    #[test]
    fn contested_seat_student_one_deceives() {
        let e = contested_seat(1.0, 0.3);
        // Cutoff at student 2's clean priority (0.5).
        let cut = CutoffVector(vec![Cutoff::Finite(0.5)]);
        assert!(optimal_deception(&e, 0, &cut));
        assert!(!optimal_deception(&e, 1, &cut));
    }

    #[test]
    fn expensive_deception_never_chosen() {
        let e = two_school(1.0, 2.0);
        let cut = CutoffVector(vec![Cutoff::Finite(0.9), Cutoff::Finite(0.9)]);
        assert!(!optimal_deception(&e, 0, &cut));
    }

    #[test]
    fn cost_charged_once() {
        let e = two_school(1.0, 0.25);
        let cut = CutoffVector(vec![Cutoff::Finite(0.9), Cutoff::Finite(0.9)]);
        let d = individual_demand(&e, 0, &cut);
        assert!(d.with_deception);
        assert_eq!(d.net_utility, 2.0 - 0.25);
    }
}
