//! Envy audits: justified envy under realized priorities, the same test with
//! manipulation stripped out (`w = 0`), and the distance-based manipulation
//! envy used on register data.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::deception::blend_priority;
use crate::error::{Error, Result};
use crate::exec;
use crate::market::{assigned_mass, Economy, MatchOutcome, SchoolId, StudentId, MASS_TOLERANCE};
use crate::mechanisms::Rols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvyKind {
    Justified,
    InvariantJustified,
    EmpiricalManipulation,
}

impl EnvyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvyKind::Justified => "justified",
            EnvyKind::InvariantJustified => "invariant_justified",
            EnvyKind::EmpiricalManipulation => "empirical_manipulation",
        }
    }
}

/// `envied = None` marks envy of a vacant seat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EnvyRecord {
    pub envier: StudentId,
    pub envied: Option<StudentId>,
    pub school: SchoolId,
    pub kind: EnvyKind,
}

fn pairwise_envy(
    e: &Economy,
    m: &MatchOutcome,
    kind: EnvyKind,
    priority: impl Fn(usize, usize) -> f64 + Sync + Send,
) -> Result<Vec<EnvyRecord>> {
    if m.chosen_action.len() != e.n_students() {
        return Err(Error::InvalidInput("outcome does not match economy".into()));
    }
    let assignment = m.school_indices(e)?;
    let mass = assigned_mass(e, &assignment);
    // Occupants per school, highest priority first.
    let mut occupants: Vec<Vec<(usize, f64)>> = vec![Vec::new(); e.n_schools()];
    for (i, a) in assignment.iter().enumerate() {
        if let Some(s) = *a {
            occupants[s].push((i, priority(i, s)));
        }
    }
    for list in occupants.iter_mut() {
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    }

    let per_student = exec::map_range(e.n_students(), |i| {
        let st = &e.students[i];
        let mut out = Vec::new();
        for s in 0..e.n_schools() {
            if !st.prefers(Some(s), assignment[i]) {
                continue;
            }
            let school = e.schools[s].id;
            if e.schools[s].capacity - mass[s] >= st.weight - MASS_TOLERANCE {
                out.push(EnvyRecord { envier: st.id, envied: None, school, kind });
            }
            let p = priority(i, s);
            let mut beaten: Vec<usize> = occupants[s].iter().filter(|&&(_, pj)| p > pj).map(|&(j, _)| j).collect();
            beaten.sort_unstable();
            out.extend(beaten.into_iter().map(|j| EnvyRecord {
                envier: st.id,
                envied: Some(e.students[j].id),
                school,
                kind,
            }));
        }
        out
    });
    Ok(per_student.into_iter().flatten().collect())
}

/// Pairs `(i, j, s)` where `i` prefers `s`, `j` holds a seat at `s`, and `i`'s
/// realized priority there (under the chosen actions) is strictly higher; plus
/// vacant-seat envy.
pub fn audit_justified_envy(e: &Economy, m: &MatchOutcome) -> Result<Vec<EnvyRecord>> {
    pairwise_envy(e, m, EnvyKind::Justified, |i, s| blend_priority(e, i, s, m.chosen_action[i]))
}

/// As [`audit_justified_envy`], comparing exogenous priorities only.
pub fn audit_invariant_justified_envy(e: &Economy, m: &MatchOutcome) -> Result<Vec<EnvyRecord>> {
    pairwise_envy(e, m, EnvyKind::InvariantJustified, |i, s| e.students[i].exog_priority[s])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoolEnvyShare {
    pub school_id: SchoolId,
    pub share_with_envy: f64,
    /// Mass of students who listed this school first and did not enrol there.
    pub n_non_enrolled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEnvySummary {
    pub share_with_envy: f64,
    pub n_non_enrolled: f64,
    pub per_school: Vec<SchoolEnvyShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEnvyReport {
    pub records: Vec<EnvyRecord>,
    pub summary: EmpiricalEnvySummary,
}

/// Distance-based manipulation envy.
///
/// Student `i` not enrolled at its first-listed school `s`, where `s` had more
/// first listings than enrolments, envies every mover `j` enrolled at `s` whose
/// original address was farther from `s` than `i`'s and whose new address is
/// closer. Original address is action 0; the new one is `j`'s chosen action in
/// `baseline`. Shares are computed per envier over the non-enrolled population.
pub fn audit_empirical_envy(
    e: &Economy,
    baseline: &MatchOutcome,
    rols: &Rols,
    movers: &BTreeSet<StudentId>,
) -> Result<EmpiricalEnvyReport> {
    let assignment = baseline.school_indices(e)?;
    let lists = rols.to_indices(e)?;
    let mut mover_idx = Vec::with_capacity(movers.len());
    for id in movers {
        let j = e.student_index(*id).ok_or_else(|| Error::InvalidInput(format!("unknown mover {id}")))?;
        if baseline.chosen_action[j] == 0 {
            return Err(Error::InvalidInput(format!("mover {id} kept the null action")));
        }
        mover_idx.push(j);
    }

    let n_s = e.n_schools();
    let mut first_listed = vec![0.0; n_s];
    for (i, list) in lists.iter().enumerate() {
        if let Some(&s) = list.first() {
            first_listed[s] += e.students[i].weight;
        }
    }
    let enrolled = assigned_mass(e, &assignment);
    let oversubscribed: Vec<bool> = (0..n_s).map(|s| first_listed[s] > enrolled[s] + MASS_TOLERANCE).collect();

    let mut movers_at: Vec<Vec<usize>> = vec![Vec::new(); n_s];
    for &j in &mover_idx {
        if let Some(s) = assignment[j] {
            movers_at[s].push(j);
        }
    }
    for list in movers_at.iter_mut() {
        list.sort_unstable();
    }

    let per_student: Vec<Option<(usize, Vec<EnvyRecord>)>> = exec::map_range(e.n_students(), |i| {
        let &s = lists[i].first()?;
        if assignment[i] == Some(s) {
            return None;
        }
        let mut out = Vec::new();
        if oversubscribed[s] {
            let d_i = e.distance(i, 0, s);
            for &j in &movers_at[s] {
                if j != i && d_i < e.distance(j, 0, s) && d_i > e.distance(j, baseline.chosen_action[j], s) {
                    out.push(EnvyRecord {
                        envier: e.students[i].id,
                        envied: Some(e.students[j].id),
                        school: e.schools[s].id,
                        kind: EnvyKind::EmpiricalManipulation,
                    });
                }
            }
        }
        Some((s, out))
    });

    let mut pop = vec![0.0; n_s];
    let mut with_envy = vec![0.0; n_s];
    let mut records = Vec::new();
    for (i, entry) in per_student.into_iter().enumerate() {
        if let Some((s, recs)) = entry {
            let w = e.students[i].weight;
            pop[s] += w;
            if !recs.is_empty() {
                with_envy[s] += w;
            }
            records.extend(recs);
        }
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let total_pop: f64 = pop.iter().sum();
    let total_envy: f64 = with_envy.iter().sum();
    let per_school = (0..n_s)
        .filter(|&s| pop[s] > 0.0)
        .map(|s| SchoolEnvyShare {
            school_id: e.schools[s].id,
            share_with_envy: ratio(with_envy[s], pop[s]),
            n_non_enrolled: pop[s],
        })
        .collect();
    Ok(EmpiricalEnvyReport {
        records,
        summary: EmpiricalEnvySummary {
            share_with_envy: ratio(total_envy, total_pop),
            n_non_enrolled: total_pop,
            per_school,
        },
    })
}

/// One row per record: `envier,envied,school,kind` (empty `envied` for vacant seats).
pub fn write_records_csv<W: Write>(records: &[EnvyRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["envier", "envied", "school", "kind"])?;
    for r in records {
        out.write_record([
            r.envier.to_string(),
            r.envied.map(|j| j.to_string()).unwrap_or_default(),
            r.school.to_string(),
            r.kind.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &EmpiricalEnvySummary, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["school_id", "share_with_envy", "n_non_enrolled"])?;
    for row in &summary.per_school {
        out.write_record([row.school_id.to_string(), row.share_with_envy.to_string(), row.n_non_enrolled.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Envy counts per school, handy for quick summaries of the pairwise audits.
pub fn count_by_school(records: &[EnvyRecord]) -> BTreeMap<SchoolId, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.school).or_insert(0) += 1;
    }
    out
}
