//! Student-proposing deferred acceptance and immediate acceptance over
//! realized priorities, plus exhaustive misreport and deception searches.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deception::blend_priority;
use crate::error::{Error, Result};
use crate::exec;
use crate::market::{
    cutoffs_of_matching, Economy, MatchOutcome, Mechanism, SchoolId, StudentId, MASS_TOLERANCE, TIE_TOLERANCE,
};
use crate::seed::{rng_for, Stream};

/// Ordered list of schools submitted by one student.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankOrderList(pub Vec<SchoolId>);

impl RankOrderList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based position of a school in the list.
    pub fn rank_of(&self, school: SchoolId) -> Option<usize> {
        self.0.iter().position(|&s| s == school).map(|p| p + 1)
    }
}

/// Rank-order lists keyed by student. Students without an entry list nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rols(pub BTreeMap<StudentId, RankOrderList>);

#[derive(Debug, Serialize, Deserialize)]
struct RolRow {
    student_id: u32,
    rank: usize,
    school_id: u32,
}

impl Rols {
    /// Every student lists their positive-utility schools in preference
    /// order, truncated to `cap` entries when given.
    pub fn truthful(e: &Economy, cap: Option<usize>) -> Rols {
        Rols(
            e.students
                .iter()
                .map(|st| {
                    let mut order = st.preference_order();
                    if let Some(cap) = cap {
                        order.truncate(cap);
                    }
                    (st.id, RankOrderList(order.into_iter().map(|s| e.schools[s].id).collect()))
                })
                .collect(),
        )
    }

    pub fn get(&self, id: StudentId) -> Option<&RankOrderList> {
        self.0.get(&id)
    }

    pub fn insert(&mut self, id: StudentId, rol: RankOrderList) {
        self.0.insert(id, rol);
    }

    /// Rejects duplicates, unknown schools, unknown students and lists longer than `cap`.
    pub fn validate(&self, e: &Economy, cap: Option<usize>) -> Result<()> {
        let known: HashSet<StudentId> = e.students.iter().map(|s| s.id).collect();
        for (sid, rol) in &self.0 {
            if !known.contains(sid) {
                return Err(Error::InvalidInput(format!("ROL for unknown student {sid}")));
            }
            if let Some(cap) = cap {
                if rol.len() > cap {
                    return Err(Error::InvalidInput(format!(
                        "student {sid} lists {} schools, cap is {cap}",
                        rol.len()
                    )));
                }
            }
            let mut seen = HashSet::new();
            for school in &rol.0 {
                if e.school_index(*school).is_none() {
                    return Err(Error::InvalidInput(format!("student {sid} lists unknown school {school}")));
                }
                if !seen.insert(*school) {
                    return Err(Error::InvalidInput(format!("student {sid} lists school {school} twice")));
                }
            }
        }
        Ok(())
    }

    /// Lists as school indices, aligned with `e.students`.
    pub fn to_indices(&self, e: &Economy) -> Result<Vec<Vec<usize>>> {
        self.validate(e, None)?;
        Ok(e.students
            .iter()
            .map(|st| {
                self.0.get(&st.id).map_or_else(Vec::new, |rol| {
                    rol.0.iter().map(|id| e.school_index(*id).expect("validated")).collect()
                })
            })
            .collect())
    }

    /// CSV with header `student_id,rank,school_id`; rank is 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (sid, rol) in &self.0 {
            for (k, school) in rol.0.iter().enumerate() {
                wr.serialize(RolRow { student_id: sid.0, rank: k + 1, school_id: school.0 })?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Rols> {
        let mut rows: BTreeMap<StudentId, Vec<(usize, SchoolId)>> = BTreeMap::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: RolRow = row?;
            if row.rank == 0 {
                return Err(Error::InvalidInput(format!("student {} has rank 0", row.student_id)));
            }
            rows.entry(StudentId(row.student_id)).or_default().push((row.rank, SchoolId(row.school_id)));
        }
        let mut out = BTreeMap::new();
        for (sid, mut entries) in rows {
            entries.sort_by_key(|(rank, _)| *rank);
            for (k, (rank, _)) in entries.iter().enumerate() {
                if *rank != k + 1 {
                    return Err(Error::InvalidInput(format!("student {sid} ranks are not 1..n")));
                }
            }
            out.insert(sid, RankOrderList(entries.into_iter().map(|(_, s)| s).collect()));
        }
        Ok(Rols(out))
    }
}

/// One uniform draw per student, shared by every mechanism run with the same
/// seed. Higher draws win priority ties.
pub fn lottery(n_students: usize, seed: u64) -> Vec<u64> {
    let mut rng = rng_for(seed, Stream::Lottery, 0);
    (0..n_students).map(|_| rng.random()).collect()
}

/// Everything a mechanism needs once lists, actions and the lottery are fixed.
pub(crate) struct Instance<'a> {
    pub e: &'a Economy,
    pub lists: &'a [Vec<usize>],
    pub actions: &'a [usize],
    pub lottery: &'a [u64],
}

impl Instance<'_> {
    fn priority(&self, i: usize, s: usize) -> f64 {
        blend_priority(self.e, i, s, self.actions[i])
    }

    /// Descending priority order, lottery breaks ties.
    fn rank_cmp(&self, a: usize, pa: f64, b: usize, pb: f64) -> Ordering {
        pb.total_cmp(&pa).then_with(|| self.lottery[b].cmp(&self.lottery[a]))
    }

    pub fn run(&self, mechanism: Mechanism) -> Vec<Option<usize>> {
        match mechanism {
            Mechanism::Da => self.deferred_acceptance(),
            Mechanism::Ia => self.immediate_acceptance(),
        }
    }

    fn deferred_acceptance(&self) -> Vec<Option<usize>> {
        let e = self.e;
        let n = e.n_students();
        let mut next = vec![0usize; n];
        let mut held: Vec<Vec<(usize, f64)>> = vec![Vec::new(); e.n_schools()];
        let mut mass = vec![0.0; e.n_schools()];
        let mut assigned: Vec<Option<usize>> = vec![None; n];
        let mut free: Vec<usize> = (0..n).rev().collect();

        while let Some(i) = free.pop() {
            let Some(&s) = self.lists[i].get(next[i]) else {
                continue;
            };
            next[i] += 1;
            let p = self.priority(i, s);
            held[s].push((i, p));
            mass[s] += e.students[i].weight;
            assigned[i] = Some(s);
            while mass[s] > e.schools[s].capacity + MASS_TOLERANCE {
                // Reject the lowest-ranked held student.
                let (pos, _) = held[s]
                    .iter()
                    .enumerate()
                    .max_by(|(_, &(a, pa)), (_, &(b, pb))| self.rank_cmp(a, pa, b, pb))
                    .expect("held list non-empty while over capacity");
                let (j, _) = held[s].swap_remove(pos);
                mass[s] -= e.students[j].weight;
                assigned[j] = None;
                free.push(j);
            }
        }
        assigned
    }

    fn immediate_acceptance(&self) -> Vec<Option<usize>> {
        let e = self.e;
        let n = e.n_students();
        let rounds = self.lists.iter().map(Vec::len).max().unwrap_or(0);
        let mut remaining: Vec<f64> = e.schools.iter().map(|s| s.capacity).collect();
        let mut assigned: Vec<Option<usize>> = vec![None; n];
        let mut applicants: Vec<Vec<(usize, f64)>> = vec![Vec::new(); e.n_schools()];

        for r in 0..rounds {
            for list in applicants.iter_mut() {
                list.clear();
            }
            for i in 0..n {
                if assigned[i].is_none() {
                    if let Some(&s) = self.lists[i].get(r) {
                        applicants[s].push((i, self.priority(i, s)));
                    }
                }
            }
            for (s, list) in applicants.iter_mut().enumerate() {
                list.sort_by(|&(a, pa), &(b, pb)| self.rank_cmp(a, pa, b, pb));
                for &(i, _) in list.iter() {
                    let w = e.students[i].weight;
                    if w > remaining[s] + MASS_TOLERANCE {
                        break;
                    }
                    remaining[s] -= w;
                    assigned[i] = Some(s);
                }
            }
        }
        assigned
    }
}

fn check_actions(e: &Economy, actions: &[usize]) -> Result<()> {
    if actions.len() != e.n_students() {
        return Err(Error::InvalidInput(format!("{} actions given for {} students", actions.len(), e.n_students())));
    }
    for (st, &a) in e.students.iter().zip(actions) {
        if a >= st.actions.len() {
            return Err(Error::InvalidInput(format!("student {} has no action {a}", st.id)));
        }
    }
    Ok(())
}

pub(crate) fn build_outcome(
    e: &Economy,
    assignment: &[Option<usize>],
    actions: &[usize],
    mechanism: Mechanism,
    seed: u64,
) -> Result<MatchOutcome> {
    let mut m = MatchOutcome {
        assignment: e.students.iter().zip(assignment).map(|(st, a)| (st.id, a.map(|s| e.schools[s].id))).collect(),
        cutoffs: crate::market::CutoffVector(vec![]),
        chosen_action: actions.to_vec(),
        deceived: actions.iter().map(|&a| a != 0).collect(),
        mechanism,
        seed,
    };
    m.cutoffs = cutoffs_of_matching(e, &m)?;
    Ok(m)
}

/// Runs a mechanism with the given lists and actions (aligned with students).
pub fn run_mechanism(
    e: &Economy,
    mechanism: Mechanism,
    rols: &Rols,
    actions: &[usize],
    seed: u64,
) -> Result<MatchOutcome> {
    check_actions(e, actions)?;
    let lists = rols.to_indices(e)?;
    let lot = lottery(e.n_students(), seed);
    let inst = Instance { e, lists: &lists, actions, lottery: &lot };
    build_outcome(e, &inst.run(mechanism), actions, mechanism, seed)
}

pub fn run_da(e: &Economy, rols: &Rols, actions: &[usize], seed: u64) -> Result<MatchOutcome> {
    run_mechanism(e, Mechanism::Da, rols, actions, seed)
}

pub fn run_ia(e: &Economy, rols: &Rols, actions: &[usize], seed: u64) -> Result<MatchOutcome> {
    run_mechanism(e, Mechanism::Ia, rols, actions, seed)
}

/// A student who gains by submitting something other than their true list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisreportWitness {
    pub student: StudentId,
    pub truthful: RankOrderList,
    pub misreport: RankOrderList,
    pub truthful_utility: f64,
    pub misreport_utility: f64,
}

/// A student who gains by taking a non-null action under truthful lists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeceptionWitness {
    pub student: StudentId,
    pub action: usize,
    pub honest_utility: f64,
    pub deceptive_net_utility: f64,
}

pub const MAX_SEARCH_SCHOOLS: usize = 4;

/// All ordered lists of distinct schools out of `n`, in lexicographic order
/// (the empty list first).
pub fn ordered_subsets(n: usize) -> Vec<Vec<usize>> {
    fn walk(n: usize, prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        out.push(prefix.clone());
        for s in 0..n {
            if !used[s] {
                used[s] = true;
                prefix.push(s);
                walk(n, prefix, used, out);
                prefix.pop();
                used[s] = false;
            }
        }
    }
    let mut out = Vec::new();
    walk(n, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Exhaustive search for a profitable rank-order misreport, everyone else
/// truthful. Returns the witness with the smallest student index, then the
/// lexicographically smallest misreport.
pub fn find_misreport_witness(
    e: &Economy,
    mechanism: Mechanism,
    max_students: usize,
    actions: &[usize],
    seed: u64,
) -> Result<Option<MisreportWitness>> {
    if e.n_students() > max_students || e.n_schools() > MAX_SEARCH_SCHOOLS {
        return Err(Error::SearchSpaceExceeded {
            students: e.n_students(),
            schools: e.n_schools(),
            max_students,
            max_schools: MAX_SEARCH_SCHOOLS,
        });
    }
    check_actions(e, actions)?;
    let truthful: Vec<Vec<usize>> = e.students.iter().map(|s| s.preference_order()).collect();
    let lot = lottery(e.n_students(), seed);
    let base = Instance { e, lists: &truthful, actions, lottery: &lot }.run(mechanism);
    let candidates = ordered_subsets(e.n_schools());
    let to_rol = |list: &[usize]| RankOrderList(list.iter().map(|&s| e.schools[s].id).collect());

    let per_student = exec::map_range(e.n_students(), |i| {
        let st = &e.students[i];
        let honest = st.utility_of(base[i]);
        let mut lists = truthful.clone();
        for cand in &candidates {
            if *cand == truthful[i] {
                continue;
            }
            lists[i] = cand.clone();
            let out = Instance { e, lists: &lists, actions, lottery: &lot }.run(mechanism);
            let u = st.utility_of(out[i]);
            if u > honest + TIE_TOLERANCE {
                return Some(MisreportWitness {
                    student: st.id,
                    truthful: to_rol(&truthful[i]),
                    misreport: to_rol(cand),
                    truthful_utility: honest,
                    misreport_utility: u,
                });
            }
        }
        None
    });
    Ok(per_student.into_iter().flatten().next())
}

/// Search for a student who strictly gains from a non-null action when
/// everybody reports truthfully and everybody else stays at the null action.
pub fn find_deception_witness(e: &Economy, mechanism: Mechanism, seed: u64) -> Result<Option<DeceptionWitness>> {
    let truthful: Vec<Vec<usize>> = e.students.iter().map(|s| s.preference_order()).collect();
    let lot = lottery(e.n_students(), seed);
    let null = vec![0usize; e.n_students()];
    let base = Instance { e, lists: &truthful, actions: &null, lottery: &lot }.run(mechanism);

    let per_student = exec::map_range(e.n_students(), |i| {
        let st = &e.students[i];
        let honest = st.utility_of(base[i]);
        let mut actions = null.clone();
        for a in 1..st.actions.len() {
            actions[i] = a;
            let out = Instance { e, lists: &truthful, actions: &actions, lottery: &lot }.run(mechanism);
            let net = st.utility_of(out[i]) - e.gamma_for(i);
            if net > honest + TIE_TOLERANCE {
                return Some(DeceptionWitness {
                    student: st.id,
                    action: a,
                    honest_utility: honest,
                    deceptive_net_utility: net,
                });
            }
        }
        None
    });
    Ok(per_student.into_iter().flatten().next())
}

#[cfg(test)]
pub(crate) mod fixtures {
    pub use crate::instances::order_dependence;
}
