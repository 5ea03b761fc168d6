//! Economies, matchings and cutoffs.
//!
//! Students and schools are stored in vectors; per-school maps on a student
//! (utilities, exogenous priorities) are vectors aligned with `Economy::schools`.
//! A continuum economy is represented by sampled types with equal weights.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Two utilities closer than this are treated as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Slack allowed when comparing assigned mass with capacity.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchoolId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentId(pub u32);

impl fmt::Display for SchoolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point in the plane, in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Address {
    pub x: f64,
    pub y: f64,
}

impl Address {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Address) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct School {
    pub id: SchoolId,
    pub capacity: f64,
    pub location: Address,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub cohort_year: i32,
    pub municipality: u32,
    pub treated: bool,
    pub post: bool,
    pub parental_income: f64,
    pub gpa: f64,
    pub female: bool,
    pub parental_education_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentType {
    pub id: StudentId,
    pub weight: f64,
    /// Utility of each school, aligned with `Economy::schools`. Unmatched is 0.
    pub utilities: Vec<f64>,
    /// Non-manipulable priority component at each school, in `[0, 1]`.
    pub exog_priority: Vec<f64>,
    /// Feasible addresses; index 0 is the null action (stay put).
    pub actions: Vec<Address>,
    #[serde(default)]
    pub covariates: Covariates,
    /// Extra deception cost on top of `Economy::gamma` (regional reforms).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub deception_surcharge: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl StudentType {
    /// Schools with strictly positive utility, best first.
    pub fn preference_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.utilities.len()).filter(|&s| self.utilities[s] > 0.0).collect();
        order.sort_by(|&a, &b| self.utilities[b].total_cmp(&self.utilities[a]).then(a.cmp(&b)));
        order
    }

    /// Utility of an assignment given by school index.
    pub fn utility_of(&self, school: Option<usize>) -> f64 {
        school.map_or(0.0, |s| self.utilities[s])
    }

    /// Strict preference between two assignments.
    pub fn prefers(&self, a: Option<usize>, b: Option<usize>) -> bool {
        self.utility_of(a) > self.utility_of(b) + TIE_TOLERANCE
    }
}

/// How distances between addresses and schools are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    /// `times[student][action][school]`, aligned with the economy's vectors.
    TimeMatrix {
        times: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economy {
    pub schools: Vec<School>,
    pub students: Vec<StudentType>,
    pub w: f64,
    pub gamma: f64,
    pub metric: DistanceMetric,
    pub d_max: f64,
}

impl Economy {
    pub fn n_schools(&self) -> usize {
        self.schools.len()
    }

    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.students.iter().map(|s| s.weight).sum()
    }

    pub fn school_index(&self, id: SchoolId) -> Option<usize> {
        self.schools.iter().position(|s| s.id == id)
    }

    pub fn student_index(&self, id: StudentId) -> Option<usize> {
        self.students.iter().position(|s| s.id == id)
    }

    /// Distance from a student's action to a school, under the economy's metric.
    pub fn distance(&self, student: usize, action: usize, school: usize) -> f64 {
        match &self.metric {
            DistanceMetric::Euclidean => {
                self.students[student].actions[action].distance(&self.schools[school].location)
            }
            DistanceMetric::TimeMatrix { times } => times[student][action][school],
        }
    }

    /// Deception cost faced by one student.
    pub fn gamma_for(&self, student: usize) -> f64 {
        self.gamma + self.students[student].deception_surcharge
    }

    pub fn with_w(&self, w: f64) -> Economy {
        Economy { w, ..self.clone() }
    }

    pub fn with_gamma(&self, gamma: f64) -> Economy {
        Economy { gamma, ..self.clone() }
    }

    /// Diagonal of the bounding box around every school and student address.
    pub fn bounding_diameter(&self) -> f64 {
        let points =
            self.schools.iter().map(|s| s.location).chain(self.students.iter().flat_map(|s| s.actions.iter().copied()));
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in points {
            lo_x = lo_x.min(p.x);
            lo_y = lo_y.min(p.y);
            hi_x = hi_x.max(p.x);
            hi_y = hi_y.max(p.y);
        }
        if lo_x > hi_x {
            return 0.0;
        }
        (hi_x - lo_x).hypot(hi_y - lo_y)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Economy> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One broken rule found by [`validate_economy`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Collects every invariant violation; an empty list means the economy is well formed.
pub fn validate_economy(e: &Economy) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, rule: &str| out.push(Violation { entity, rule: rule.to_string() });

    if !(0.0..=1.0).contains(&e.w) {
        push("economy".into(), "w out of [0,1]");
    }
    if !(e.gamma > 0.0 && e.gamma.is_finite()) {
        push("economy".into(), "gamma must be > 0");
    }
    if !(e.d_max > 0.0 && e.d_max.is_finite()) {
        push("economy".into(), "d_max must be > 0");
    }
    if !(e.total_mass() > 0.0) {
        push("economy".into(), "total student mass must be > 0");
    }

    let mut seen = HashSet::new();
    for school in &e.schools {
        let name = format!("school {}", school.id);
        if !seen.insert(school.id) {
            push(name.clone(), "duplicate school id");
        }
        if !(school.capacity >= 0.0 && school.capacity.is_finite()) {
            push(name.clone(), "capacity < 0");
        }
        if !school.location.is_finite() {
            push(name, "non-finite location");
        }
    }

    let n_schools = e.schools.len();
    let mut seen = HashSet::new();
    for (i, st) in e.students.iter().enumerate() {
        let name = format!("student {}", st.id);
        if !seen.insert(st.id) {
            push(name.clone(), "duplicate student id");
        }
        if !(st.weight > 0.0 && st.weight.is_finite()) {
            push(name.clone(), "weight must be > 0");
        }
        if st.actions.len() < 2 {
            push(name.clone(), "|actions| < 2");
        }
        if st.actions.iter().any(|a| !a.is_finite()) {
            push(name.clone(), "non-finite action address");
        }
        if st.utilities.len() != n_schools {
            push(name.clone(), "utilities do not cover every school");
        } else {
            if st.utilities.iter().any(|u| !u.is_finite()) {
                push(name.clone(), "non-finite utility");
            }
            let mut sorted = st.utilities.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| (w[1] - w[0]).abs() <= TIE_TOLERANCE) {
                push(name.clone(), "preferences not strict");
            }
        }
        if st.exog_priority.len() != n_schools {
            push(name.clone(), "exog_priority does not cover every school");
        } else if st.exog_priority.iter().any(|p| !(0.0..=1.0).contains(p)) {
            push(name.clone(), "exog_priority out of [0,1]");
        }
        if !(st.deception_surcharge >= 0.0 && st.deception_surcharge.is_finite()) {
            push(name.clone(), "deception_surcharge must be >= 0");
        }
        if let DistanceMetric::TimeMatrix { times } = &e.metric {
            let ok = times.get(i).is_some_and(|per_action| {
                per_action.len() == st.actions.len()
                    && per_action.iter().all(|row| row.len() == n_schools && row.iter().all(|t| *t >= 0.0))
            });
            if !ok {
                push(name, "time matrix does not cover student actions");
            }
        }
    }
    if let DistanceMetric::TimeMatrix { times } = &e.metric {
        if times.len() != e.students.len() {
            push("metric".into(), "time matrix row count differs from student count");
        }
    }
    out
}

/// Cutoff at one school. `Unconstrained` stands for an admission threshold of −∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    Unconstrained,
    Finite(f64),
}

impl Cutoff {
    /// Whether a realized priority clears this cutoff.
    pub fn admits(&self, priority: f64) -> bool {
        match *self {
            Cutoff::Unconstrained => true,
            Cutoff::Finite(c) => priority >= c,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Cutoff::Unconstrained => None,
            Cutoff::Finite(c) => Some(c),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Cutoff::Finite(_))
    }

    /// Total order with `Unconstrained` below every finite value.
    pub fn cmp_total(&self, other: &Cutoff) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Cutoff::Unconstrained, Cutoff::Unconstrained) => Equal,
            (Cutoff::Unconstrained, _) => Less,
            (_, Cutoff::Unconstrained) => Greater,
            (Cutoff::Finite(a), Cutoff::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cutoff::Unconstrained => s.serialize_str("unconstrained"),
            Cutoff::Finite(c) => s.serialize_f64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(Cutoff::Finite(c)),
            Raw::Tag(t) if t == "unconstrained" => Ok(Cutoff::Unconstrained),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown cutoff tag {t:?}"))),
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Unconstrained => f.write_str("unconstrained"),
            Cutoff::Finite(c) => write!(f, "{c}"),
        }
    }
}

/// Per-school cutoffs, aligned with `Economy::schools`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CutoffVector(pub Vec<Cutoff>);

impl CutoffVector {
    pub fn unconstrained(n: usize) -> Self {
        Self(vec![Cutoff::Unconstrained; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, s: usize) -> Cutoff {
        self.0[s]
    }

    pub fn set(&mut self, s: usize, c: Cutoff) {
        self.0[s] = c;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cutoff> {
        self.0.iter()
    }

    /// Largest component-wise gap; `Unconstrained` matches only itself.
    pub fn max_abs_diff(&self, other: &CutoffVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| match (a, b) {
                (Cutoff::Unconstrained, Cutoff::Unconstrained) => 0.0,
                (Cutoff::Finite(x), Cutoff::Finite(y)) => (x - y).abs(),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    #[serde(rename = "IA")]
    Ia,
    #[serde(rename = "DA")]
    Da,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Ia => "IA",
            Mechanism::Da => "DA",
        })
    }
}

/// An allocation. Vectors are aligned with `Economy::students` / `Economy::schools`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// `(student, school | null)` pairs in student order.
    pub assignment: Vec<(StudentId, Option<SchoolId>)>,
    pub cutoffs: CutoffVector,
    pub chosen_action: Vec<usize>,
    pub deceived: Vec<bool>,
    pub mechanism: Mechanism,
    pub seed: u64,
}

impl MatchOutcome {
    /// Assignment as school indices; requires the outcome to be aligned with `e`.
    pub fn school_indices(&self, e: &Economy) -> Result<Vec<Option<usize>>> {
        if self.assignment.len() != e.students.len() {
            return Err(Error::InfeasibleMatching(format!(
                "assignment covers {} students, economy has {}",
                self.assignment.len(),
                e.students.len()
            )));
        }
        self.assignment
            .iter()
            .zip(&e.students)
            .map(|(&(sid, school), st)| {
                if sid != st.id {
                    return Err(Error::InfeasibleMatching(format!(
                        "assignment student {sid} out of order (expected {})",
                        st.id
                    )));
                }
                match school {
                    None => Ok(None),
                    Some(id) => e
                        .school_index(id)
                        .map(Some)
                        .ok_or_else(|| Error::InfeasibleMatching(format!("unknown school {id}"))),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<MatchOutcome> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Mass assigned to each school.
pub fn assigned_mass(e: &Economy, assignment: &[Option<usize>]) -> Vec<f64> {
    let mut mass = vec![0.0; e.schools.len()];
    for (st, a) in e.students.iter().zip(assignment) {
        if let Some(s) = a {
            mass[*s] += st.weight;
        }
    }
    mass
}

/// True iff the outcome assigns each student at most once and respects capacities.
pub fn check_feasibility(e: &Economy, m: &MatchOutcome) -> bool {
    let Ok(idx) = m.school_indices(e) else {
        return false;
    };
    assigned_mass(e, &idx).iter().zip(&e.schools).all(|(mass, school)| *mass <= school.capacity + MASS_TOLERANCE)
}

fn action_checked(e: &Economy, m: &MatchOutcome, i: usize) -> Result<usize> {
    let a = *m
        .chosen_action
        .get(i)
        .ok_or_else(|| Error::InfeasibleMatching("chosen_action shorter than students".into()))?;
    if a >= e.students[i].actions.len() {
        return Err(Error::InfeasibleMatching(format!("student {} has no action {a}", e.students[i].id)));
    }
    Ok(a)
}

/// Minimal realized priority among admitted students at each full school;
/// `Unconstrained` where assigned mass is below capacity.
pub fn cutoffs_of_matching(e: &Economy, m: &MatchOutcome) -> Result<CutoffVector> {
    if !check_feasibility(e, m) {
        return Err(Error::InfeasibleMatching("infeasible matching".into()));
    }
    let idx = m.school_indices(e)?;
    let mass = assigned_mass(e, &idx);
    let mut min_priority = vec![f64::INFINITY; e.schools.len()];
    for (i, a) in idx.iter().enumerate() {
        if let Some(s) = *a {
            let action = action_checked(e, m, i)?;
            let p = crate::deception::blend_priority(e, i, s, action);
            min_priority[s] = min_priority[s].min(p);
        }
    }
    Ok(CutoffVector(
        e.schools
            .iter()
            .enumerate()
            .map(|(s, school)| {
                if mass[s] < school.capacity - MASS_TOLERANCE || mass[s] == 0.0 {
                    Cutoff::Unconstrained
                } else {
                    Cutoff::Finite(min_priority[s])
                }
            })
            .collect(),
    ))
}
