//! The remove-manipulation experiment: in each repetition, classify moves,
//! send flagged movers back to their original address, re-run the mechanism
//! with unchanged rank-order lists, and compare everyone's rank.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{classify_moves, MoveEvent};
use crate::envy::audit_empirical_envy;
use crate::error::{Error, Result};
use crate::exec;
use crate::market::{Economy, MatchOutcome, Mechanism, StudentId};
use crate::mechanisms::{lottery, run_mechanism, Instance, Rols};
use crate::seed::{derive, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovariateMode {
    /// Pool student-reps: each student weighted by how often it lands in a group.
    #[default]
    FrequencyWeighted,
    /// Group means per rep, averaged over reps where the group is non-empty.
    RepAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PeerMode {
    /// Counterfactual peers are the counterfactual classmates.
    #[default]
    Contemporaneous,
    /// Counterfactual school quality measured by its baseline peers.
    BaselineFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualOptions {
    pub reps: usize,
    pub master_seed: u64,
    pub mechanism: Mechanism,
    pub covariate_mode: CovariateMode,
    pub peer_mode: PeerMode,
}

impl Default for CounterfactualOptions {
    fn default() -> Self {
        Self {
            reps: 150,
            master_seed: 1,
            mechanism: Mechanism::Ia,
            covariate_mode: CovariateMode::default(),
            peer_mode: PeerMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub rep: usize,
    pub rep_seed: u64,
    pub n_flagged: usize,
    pub winners_mass: f64,
    pub losers_mass: f64,
    pub unaffected_mass: f64,
    /// Students whose assignment differs from the baseline.
    pub n_changed: usize,
    pub envy_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GroupMeans {
    /// Average mass per rep.
    pub mass: f64,
    pub female: f64,
    pub parental_income: f64,
    pub parental_education_years: f64,
    pub gpa: f64,
    pub peer_gpa_baseline: f64,
    pub peer_gpa_counterfactual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub per_rep: Vec<RepSummary>,
    pub unaffected: GroupMeans,
    pub losers: GroupMeans,
    pub winners: GroupMeans,
    pub reps: usize,
    pub master_seed: u64,
    pub total_mass: f64,
    pub covariate_mode: CovariateMode,
    pub peer_mode: PeerMode,
}

/// Registered action per student: the destination of its move, 0 otherwise.
pub fn baseline_actions(e: &Economy, events: &[MoveEvent]) -> Result<Vec<usize>> {
    let mut out = vec![0; e.n_students()];
    for ev in events {
        let i = e
            .student_index(ev.student)
            .ok_or_else(|| Error::InvalidInput(format!("move by unknown student {}", ev.student)))?;
        if ev.action >= e.students[i].actions.len() {
            return Err(Error::InvalidInput(format!("student {} has no action {}", ev.student, ev.action)));
        }
        out[i] = ev.action;
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Group {
    Unaffected = 0,
    Losers = 1,
    Winners = 2,
}

fn rank(list: &[usize], school: Option<usize>) -> usize {
    school.and_then(|s| list.iter().position(|&x| x == s)).unwrap_or(list.len())
}

fn peer_means(e: &Economy, assignment: &[Option<usize>]) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; e.n_schools()];
    let mut mass = vec![0.0; e.n_schools()];
    for (st, a) in e.students.iter().zip(assignment) {
        if let Some(s) = *a {
            sum[s] += st.weight * st.covariates.gpa;
            mass[s] += st.weight;
        }
    }
    sum.iter().zip(&mass).map(|(&s, &m)| (m > 0.0).then(|| s / m)).collect()
}

struct Context<'a> {
    e: &'a Economy,
    rols: &'a Rols,
    lists: Vec<Vec<usize>>,
    lottery: Vec<u64>,
    events: &'a [MoveEvent],
    probs: &'a BTreeMap<u8, f64>,
    opts: &'a CounterfactualOptions,
    actions: Vec<usize>,
    baseline: MatchOutcome,
    base_assignment: Vec<Option<usize>>,
    base_peers: Vec<Option<f64>>,
}

struct RepResult {
    summary: RepSummary,
    groups: Vec<Group>,
    assignment: Vec<Option<usize>>,
}

impl Context<'_> {
    fn rep_seed(&self, rep: usize) -> u64 {
        derive(self.opts.master_seed, Stream::Reps, rep as u64)
    }

    fn flagged(&self, rep: usize) -> Result<BTreeSet<StudentId>> {
        classify_moves(self.events, self.probs, self.rep_seed(rep))
    }

    fn reset_actions(&self, flagged: &BTreeSet<StudentId>) -> Vec<usize> {
        let mut actions = self.actions.clone();
        for id in flagged {
            if let Some(i) = self.e.student_index(*id) {
                actions[i] = 0;
            }
        }
        actions
    }

    fn run_rep(&self, rep: usize) -> Result<RepResult> {
        let e = self.e;
        let flagged = self.flagged(rep)?;
        let actions = self.reset_actions(&flagged);
        let inst = Instance { e, lists: &self.lists, actions: &actions, lottery: &self.lottery };
        let assignment = inst.run(self.opts.mechanism);
        let mut masses = [0.0; 3];
        let mut groups = Vec::with_capacity(e.n_students());
        let mut n_changed = 0;
        for i in 0..e.n_students() {
            let before = rank(&self.lists[i], self.base_assignment[i]);
            let after = rank(&self.lists[i], assignment[i]);
            let g = match after.cmp(&before) {
                std::cmp::Ordering::Less => Group::Winners,
                std::cmp::Ordering::Greater => Group::Losers,
                std::cmp::Ordering::Equal => Group::Unaffected,
            };
            masses[g as usize] += e.students[i].weight;
            n_changed += (assignment[i] != self.base_assignment[i]) as usize;
            groups.push(g);
        }
        let envy = audit_empirical_envy(e, &self.baseline, self.rols, &flagged)?;
        Ok(RepResult {
            summary: RepSummary {
                rep,
                rep_seed: self.rep_seed(rep),
                n_flagged: flagged.len(),
                winners_mass: masses[Group::Winners as usize],
                losers_mass: masses[Group::Losers as usize],
                unaffected_mass: masses[Group::Unaffected as usize],
                n_changed,
                envy_share: envy.summary.share_with_envy,
            },
            groups,
            assignment,
        })
    }
}

fn context<'a>(
    e: &'a Economy,
    rols: &'a Rols,
    events: &'a [MoveEvent],
    probs: &'a BTreeMap<u8, f64>,
    opts: &'a CounterfactualOptions,
) -> Result<Context<'a>> {
    let actions = baseline_actions(e, events)?;
    let baseline = run_mechanism(e, opts.mechanism, rols, &actions, opts.master_seed)?;
    let base_assignment = baseline.school_indices(e)?;
    Ok(Context {
        e,
        rols,
        lists: rols.to_indices(e)?,
        lottery: lottery(e.n_students(), opts.master_seed),
        events,
        probs,
        opts,
        base_peers: peer_means(e, &base_assignment),
        actions,
        baseline,
        base_assignment,
    })
}

/// The outcome of one repetition, exactly as the report sees it.
pub fn rep_outcome(
    e: &Economy,
    rols: &Rols,
    events: &[MoveEvent],
    subgroup_probs: &BTreeMap<u8, f64>,
    opts: &CounterfactualOptions,
    rep: usize,
) -> Result<(MatchOutcome, MatchOutcome)> {
    let ctx = context(e, rols, events, subgroup_probs, opts)?;
    let flagged = ctx.flagged(rep)?;
    let actions = ctx.reset_actions(&flagged);
    let cf = run_mechanism(e, opts.mechanism, rols, &actions, opts.master_seed)?;
    Ok((ctx.baseline, cf))
}

#[derive(Default, Clone)]
struct Acc {
    weight: f64,
    female: f64,
    income: f64,
    education: f64,
    gpa: f64,
    peer_weight_base: f64,
    peer_base: f64,
    peer_weight_cf: f64,
    peer_cf: f64,
}

impl Acc {
    fn means(&self) -> GroupMeans {
        let r = |x: f64, w: f64| if w > 0.0 { x / w } else { 0.0 };
        GroupMeans {
            mass: 0.0,
            female: r(self.female, self.weight),
            parental_income: r(self.income, self.weight),
            parental_education_years: r(self.education, self.weight),
            gpa: r(self.gpa, self.weight),
            peer_gpa_baseline: r(self.peer_base, self.peer_weight_base),
            peer_gpa_counterfactual: r(self.peer_cf, self.peer_weight_cf),
        }
    }
}

fn accumulate(ctx: &Context, rep: &RepResult, accs: &mut [Acc; 3]) {
    let e = ctx.e;
    let cf_peers = match ctx.opts.peer_mode {
        PeerMode::Contemporaneous => peer_means(e, &rep.assignment),
        PeerMode::BaselineFixed => ctx.base_peers.clone(),
    };
    for (i, st) in e.students.iter().enumerate() {
        let a = &mut accs[rep.groups[i] as usize];
        let w = st.weight;
        let c = &st.covariates;
        a.weight += w;
        a.female += w * c.female as u8 as f64;
        a.income += w * c.parental_income;
        a.education += w * c.parental_education_years;
        a.gpa += w * c.gpa;
        if let Some(p) = ctx.base_assignment[i].and_then(|s| ctx.base_peers[s]) {
            a.peer_weight_base += w;
            a.peer_base += w * p;
        }
        if let Some(p) = rep.assignment[i].and_then(|s| cf_peers[s]) {
            a.peer_weight_cf += w;
            a.peer_cf += w * p;
        }
    }
}

fn average_means(list: &[GroupMeans]) -> GroupMeans {
    if list.is_empty() {
        return GroupMeans::default();
    }
    let n = list.len() as f64;
    let avg = |f: fn(&GroupMeans) -> f64| list.iter().map(f).sum::<f64>() / n;
    GroupMeans {
        mass: 0.0,
        female: avg(|g| g.female),
        parental_income: avg(|g| g.parental_income),
        parental_education_years: avg(|g| g.parental_education_years),
        gpa: avg(|g| g.gpa),
        peer_gpa_baseline: avg(|g| g.peer_gpa_baseline),
        peer_gpa_counterfactual: avg(|g| g.peer_gpa_counterfactual),
    }
}

/// Runs `opts.reps` repetitions in parallel; results are ordered by rep index.
/// A failing rep aborts the run and reports its seed.
pub fn run_counterfactual(
    e: &Economy,
    rols: &Rols,
    events: &[MoveEvent],
    subgroup_probs: &BTreeMap<u8, f64>,
    opts: &CounterfactualOptions,
) -> Result<CounterfactualReport> {
    if opts.reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let ctx = context(e, rols, events, subgroup_probs, opts)?;
    let results = exec::try_map_range(opts.reps, |rep| {
        ctx.run_rep(rep).map_err(|err| Error::Rep { rep, seed: ctx.rep_seed(rep), source: Box::new(err) })
    })?;

    let reps = opts.reps as f64;
    let mut group_means: [GroupMeans; 3] = Default::default();
    match opts.covariate_mode {
        CovariateMode::FrequencyWeighted => {
            let mut accs: [Acc; 3] = Default::default();
            for r in &results {
                accumulate(&ctx, r, &mut accs);
            }
            for g in 0..3 {
                group_means[g] = accs[g].means();
            }
        }
        CovariateMode::RepAverage => {
            let mut per_group: [Vec<GroupMeans>; 3] = Default::default();
            for r in &results {
                let mut accs: [Acc; 3] = Default::default();
                accumulate(&ctx, r, &mut accs);
                for g in 0..3 {
                    if accs[g].weight > 0.0 {
                        per_group[g].push(accs[g].means());
                    }
                }
            }
            for g in 0..3 {
                group_means[g] = average_means(&per_group[g]);
            }
        }
    }
    let per_rep: Vec<RepSummary> = results.into_iter().map(|r| r.summary).collect();
    group_means[Group::Unaffected as usize].mass = per_rep.iter().map(|r| r.unaffected_mass).sum::<f64>() / reps;
    group_means[Group::Losers as usize].mass = per_rep.iter().map(|r| r.losers_mass).sum::<f64>() / reps;
    group_means[Group::Winners as usize].mass = per_rep.iter().map(|r| r.winners_mass).sum::<f64>() / reps;
    let [unaffected, losers, winners] = group_means;
    Ok(CounterfactualReport {
        per_rep,
        unaffected,
        losers,
        winners,
        reps: opts.reps,
        master_seed: opts.master_seed,
        total_mass: e.total_mass(),
        covariate_mode: opts.covariate_mode,
        peer_mode: opts.peer_mode,
    })
}

/// Rows are statistics, columns Unaffected / Losers / Winners.
pub fn winners_losers_table(report: &CounterfactualReport) -> Vec<(String, [f64; 3])> {
    let cols = [&report.unaffected, &report.losers, &report.winners];
    let row = |name: &str, f: fn(&GroupMeans) -> f64| (name.to_string(), cols.map(f));
    vec![
        row("mass", |g| g.mass),
        row("female", |g| g.female),
        row("parental_income", |g| g.parental_income),
        row("parental_education_years", |g| g.parental_education_years),
        row("gpa", |g| g.gpa),
        row("peer_gpa_baseline", |g| g.peer_gpa_baseline),
        row("peer_gpa_counterfactual", |g| g.peer_gpa_counterfactual),
    ]
}

pub fn write_table_csv<W: Write>(report: &CounterfactualReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["statistic", "unaffected", "losers", "winners"])?;
    for (name, v) in winners_losers_table(report) {
        out.write_record([name, v[0].to_string(), v[1].to_string(), v[2].to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-rep masses and envy shares (histogram data).
pub fn write_rep_csv<W: Write>(report: &CounterfactualReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "rep",
        "rep_seed",
        "n_flagged",
        "winners_mass",
        "losers_mass",
        "unaffected_mass",
        "n_changed",
        "envy_share",
    ])?;
    for r in &report.per_rep {
        out.write_record([
            r.rep.to_string(),
            r.rep_seed.to_string(),
            r.n_flagged.to_string(),
            r.winners_mass.to_string(),
            r.losers_mass.to_string(),
            r.unaffected_mass.to_string(),
            r.n_changed.to_string(),
            r.envy_share.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    pub(crate) use crate::instances::displacement;

    fn probs(p: f64) -> BTreeMap<u8, f64> {
        (0..8).map(|g| (g, p)).collect()
    }

    #[test]
    fn displaced_applicant_always_wins() {
        let (e, rols, events) = displacement();
        let opts = CounterfactualOptions { reps: 20, ..Default::default() };
        let rep = run_counterfactual(&e, &rols, &events, &probs(1.0), &opts).unwrap();
        for r in &rep.per_rep {
            assert_eq!(r.winners_mass, 1.0);
            assert_eq!(r.losers_mass, 1.0);
            assert_eq!(r.envy_share, 1.0);
        }
        assert_eq!(rep.winners.female, 1.0);
        assert_eq!(rep.winners.gpa, 1.0);
        assert_eq!(rep.winners.parental_income, 500.0);
        assert_eq!(rep.losers.gpa, -0.5);
        assert_eq!(rep.winners.peer_gpa_counterfactual, 1.0);
    }

    #[test]
    fn zero_probability_is_identity() {
        let (e, rols, events) = displacement();
        let opts = CounterfactualOptions { reps: 5, ..Default::default() };
        let rep = run_counterfactual(&e, &rols, &events, &probs(0.0), &opts).unwrap();
        for r in &rep.per_rep {
            assert_eq!((r.winners_mass, r.losers_mass, r.n_changed), (0.0, 0.0, 0));
            assert_eq!(r.unaffected_mass, 2.0);
        }
        let (base, cf) = rep_outcome(&e, &rols, &events, &probs(0.0), &opts, 3).unwrap();
        assert_eq!(base.to_json().unwrap(), cf.to_json().unwrap());
        let table = winners_losers_table(&rep);
        assert_eq!(table[0].1, [2.0, 0.0, 0.0]);
    }

    #[test]
    fn rep_average_mode_agrees_on_constant_groups() {
        let (e, rols, events) = displacement();
        let opts = CounterfactualOptions { reps: 4, covariate_mode: CovariateMode::RepAverage, ..Default::default() };
        let rep = run_counterfactual(&e, &rols, &events, &probs(1.0), &opts).unwrap();
        assert_eq!(rep.winners.gpa, 1.0);
    }
}
