//! Synthetic cohorts with address moves, the move classifier, planted-effect
//! panels and the remove-manipulation counterfactual.

mod cohort;
mod counterfactual;
mod planted;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cohort::{build_world, generate_cohort, generate_cohort_in, generate_panel, Cohort, World};
pub use counterfactual::{
    baseline_actions, rep_outcome, run_counterfactual, winners_losers_table, write_rep_csv, write_table_csv,
    CounterfactualOptions, CounterfactualReport, CovariateMode, GroupMeans, PeerMode, RepSummary,
};
pub use planted::{simulate_planted_panel, PanelDgp, PlantedEffects, PlantedPanel};

pub use crate::econometrics::manipulation_probability;
use crate::error::{Error, Result};
use crate::market::{Address, StudentId};
use crate::seed::rng_for;
use crate::seed::Stream;

/// Last day of the move window, counted back from the application deadline.
pub const MOVE_WINDOW_DAYS: u32 = 151;

/// One address change during the final pre-application window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveEvent {
    pub student: StudentId,
    pub from: Address,
    pub to: Address,
    /// Days before the application deadline, in `0..=151`.
    pub day_offset: u32,
    pub household_move: bool,
    pub to_relative: bool,
    /// Index of the destination in the student's action list.
    pub action: usize,
    pub treated_post: bool,
    /// Gender × income × education cell, see [`crate::econometrics::Subgroup`].
    pub subgroup: u8,
}

/// Flags individual moves in treated-post cells: one uniform draw per eligible
/// event, in event order, flagged when below the subgroup's probability.
pub fn classify_moves(
    events: &[MoveEvent],
    subgroup_probs: &BTreeMap<u8, f64>,
    rep_seed: u64,
) -> Result<BTreeSet<StudentId>> {
    for (&g, &p) in subgroup_probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("subgroup {g} probability {p} outside [0,1]")));
        }
    }
    let mut rng = rng_for(rep_seed, Stream::Reps, 0);
    let mut flagged = BTreeSet::new();
    for ev in events.iter().filter(|e| e.treated_post && !e.household_move) {
        let p = *subgroup_probs.get(&ev.subgroup).ok_or(Error::MissingSubgroup(ev.student))?;
        let u: f64 = rng.random();
        if u < p {
            flagged.insert(ev.student);
        }
    }
    Ok(flagged)
}

pub fn write_moves_csv<W: Write>(events: &[MoveEvent], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "student",
        "from_x",
        "from_y",
        "to_x",
        "to_y",
        "day_offset",
        "household_move",
        "to_relative",
        "action",
        "treated_post",
        "subgroup",
    ])?;
    for e in events {
        out.write_record([
            e.student.to_string(),
            e.from.x.to_string(),
            e.from.y.to_string(),
            e.to.x.to_string(),
            e.to.y.to_string(),
            e.day_offset.to_string(),
            (e.household_move as u8).to_string(),
            (e.to_relative as u8).to_string(),
            e.action.to_string(),
            (e.treated_post as u8).to_string(),
            e.subgroup.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(id: u32, household: bool, tp: bool, subgroup: u8) -> MoveEvent {
        MoveEvent {
            student: StudentId(id),
            from: Address::new(0.0, 0.0),
            to: Address::new(1.0, 0.0),
            day_offset: 10,
            household_move: household,
            to_relative: true,
            action: 1,
            treated_post: tp,
            subgroup,
        }
    }

    fn all(p: f64) -> BTreeMap<u8, f64> {
        (0..8).map(|g| (g, p)).collect()
    }

    #[test]
    fn zero_probability_flags_nothing() {
        let events: Vec<_> = (0..20).map(|i| event(i, false, true, (i % 8) as u8)).collect();
        assert!(classify_moves(&events, &all(0.0), 3).unwrap().is_empty());
    }

    #[test]
    fn unit_probability_flags_eligible_only() {
        let events = vec![event(1, false, true, 0), event(2, true, true, 0), event(3, false, false, 0)];
        let flagged = classify_moves(&events, &all(1.0), 3).unwrap();
        assert_eq!(flagged, [StudentId(1)].into());
    }

    #[test]
    fn missing_subgroup_is_an_error() {
        let events = vec![event(5, false, true, 6)];
        let probs: BTreeMap<u8, f64> = [(0, 0.5)].into();
        assert!(matches!(classify_moves(&events, &probs, 1), Err(Error::MissingSubgroup(StudentId(5)))));
    }

    #[test]
    fn draws_are_reproducible() {
        let events: Vec<_> = (0..200).map(|i| event(i, false, true, 0)).collect();
        let a = classify_moves(&events, &all(0.5), 11).unwrap();
        assert_eq!(a, classify_moves(&events, &all(0.5), 11).unwrap());
        assert_ne!(a, classify_moves(&events, &all(0.5), 12).unwrap());
    }
}
