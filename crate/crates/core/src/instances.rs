//! Small hand-built economies and seeded random ones, for tests, benches and
//! demonstrations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deception::manipulable_priority;
use crate::market::{Address, Covariates, DistanceMetric, Economy, School, SchoolId, StudentId, StudentType};
use crate::mechanisms::Rols;
use crate::policy::MoveEvent;
use crate::seed::{rng_for, Stream};

/// Unit-weight student with default covariates.
pub fn student(id: u32, utilities: Vec<f64>, exog: Vec<f64>, actions: Vec<Address>) -> StudentType {
    StudentType {
        id: StudentId(id),
        weight: 1.0,
        utilities,
        exog_priority: exog,
        actions,
        covariates: Covariates::default(),
        deception_surcharge: 0.0,
    }
}

/// Two students, one seat. Student 2 has the higher exogenous priority;
/// student 1 can relocate onto the school.
pub fn contested_seat(w: f64, gamma: f64) -> Economy {
    let school = School { id: SchoolId(1), capacity: 1.0, location: Address::new(0.0, 0.0) };
    Economy {
        schools: vec![school],
        students: vec![
            student(1, vec![1.0], vec![0.2], vec![Address::new(8.0, 0.0), Address::new(0.0, 0.0)]),
            student(2, vec![1.0], vec![0.6], vec![Address::new(5.0, 0.0), Address::new(6.0, 0.0)]),
        ],
        w,
        gamma,
        metric: DistanceMetric::Euclidean,
        d_max: 10.0,
    }
}

/// Schools A (id 1) and B (id 2), one seat each, w = 0.
/// X lists A then B; Y outranks X at A and lists A; Z lists B and is
/// outranked by X at B. IA leaves X unmatched; DA gives X school B.
pub fn order_dependence() -> (Economy, Rols) {
    let home = vec![Address::new(0.0, 0.0), Address::new(1.0, 1.0)];
    let e = Economy {
        schools: vec![
            School { id: SchoolId(1), capacity: 1.0, location: Address::new(0.0, 0.0) },
            School { id: SchoolId(2), capacity: 1.0, location: Address::new(5.0, 0.0) },
        ],
        students: vec![
            student(1, vec![2.0, 1.0], vec![0.5, 0.8], home.clone()),
            student(2, vec![2.0, 0.5], vec![0.9, 0.1], home.clone()),
            student(3, vec![0.5, 2.0], vec![0.1, 0.3], home),
        ],
        w: 0.0,
        gamma: 1.0,
        metric: DistanceMetric::Euclidean,
        d_max: 10.0,
    };
    let rols = Rols::truthful(&e, None);
    (e, rols)
}

/// One seat under distance priority (w = 1). Student 1 lives 2 km away;
/// student 2 lives 5 km away and registers 0.5 km away, displacing student 1.
pub fn displacement() -> (Economy, Rols, Vec<MoveEvent>) {
    let mut a = student(1, vec![1.0], vec![0.5], vec![Address::new(2.0, 0.0), Address::new(3.0, 0.0)]);
    a.covariates.female = true;
    a.covariates.gpa = 1.0;
    a.covariates.parental_income = 500.0;
    let mut b = student(2, vec![1.0], vec![0.5], vec![Address::new(5.0, 0.0), Address::new(0.5, 0.0)]);
    b.covariates.gpa = -0.5;
    b.covariates.parental_income = 300.0;
    let e = Economy {
        schools: vec![School { id: SchoolId(1), capacity: 1.0, location: Address::new(0.0, 0.0) }],
        students: vec![a, b],
        w: 1.0,
        gamma: 0.1,
        metric: DistanceMetric::Euclidean,
        d_max: 10.0,
    };
    let rols = Rols::truthful(&e, None);
    let events = vec![MoveEvent {
        student: StudentId(2),
        from: Address::new(5.0, 0.0),
        to: Address::new(0.5, 0.0),
        day_offset: 30,
        household_move: false,
        to_relative: true,
        action: 1,
        treated_post: true,
        subgroup: 0,
    }];
    (e, rols, events)
}

/// Shape of a random economy. Addresses and schools lie in a 10 km square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n_students: usize,
    pub n_schools: usize,
    /// Addresses per student including the null action; at least 2.
    pub n_actions: usize,
    /// Integer seats per school, drawn uniformly from this inclusive range.
    pub capacity: (u32, u32),
    /// Probability that a school is unacceptable (negative utility) to a student.
    pub unacceptable_prob: f64,
    /// Fixed `w`, or uniform on `[0, 1]` when `None`.
    pub w: Option<f64>,
    /// Fixed `gamma`, or uniform on `[0.05, 1]` when `None`.
    pub gamma: Option<f64>,
    /// Student weight; capacities are multiplied by it so seats stay in student units.
    pub weight: f64,
    /// Draw each exogenous priority between the null action's manipulable
    /// priority and the best reachable one, so raising `w` never improves
    /// clean access and never worsens the best deceptive access.
    pub monotone_regime: bool,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            n_students: 6,
            n_schools: 3,
            n_actions: 3,
            capacity: (1, 2),
            unacceptable_prob: 0.1,
            w: None,
            gamma: None,
            weight: 1.0,
            monotone_regime: false,
        }
    }
}

pub const SQUARE_KM: f64 = 10.0;

fn point<R: Rng>(rng: &mut R) -> Address {
    Address::new(rng.random_range(0.0..SQUARE_KM), rng.random_range(0.0..SQUARE_KM))
}

/// Seeded random economy. Utilities and priorities are continuous draws, so
/// ties occur with probability zero.
pub fn random_economy(spec: &RandomSpec, seed: u64) -> Economy {
    let mut rng = rng_for(seed, Stream::Geography, 0);
    let w = spec.w.unwrap_or_else(|| rng.random());
    let gamma = spec.gamma.unwrap_or_else(|| rng.random_range(0.05..1.0));
    let schools = (0..spec.n_schools)
        .map(|s| School {
            id: SchoolId(s as u32 + 1),
            capacity: rng.random_range(spec.capacity.0..=spec.capacity.1) as f64 * spec.weight,
            location: point(&mut rng),
        })
        .collect();
    let students = (0..spec.n_students)
        .map(|i| {
            let utilities = (0..spec.n_schools)
                .map(|_| {
                    let u: f64 = rng.random_range(0.1..2.0);
                    if rng.random::<f64>() < spec.unacceptable_prob {
                        -u
                    } else {
                        u
                    }
                })
                .collect();
            let exog = (0..spec.n_schools).map(|_| rng.random()).collect();
            let actions = (0..spec.n_actions.max(2)).map(|_| point(&mut rng)).collect();
            StudentType { weight: spec.weight, ..student(i as u32 + 1, utilities, exog, actions) }
        })
        .collect();
    let mut e = Economy {
        schools,
        students,
        w,
        gamma,
        metric: DistanceMetric::Euclidean,
        d_max: SQUARE_KM * std::f64::consts::SQRT_2,
    };
    if spec.monotone_regime {
        for i in 0..e.n_students() {
            for s in 0..e.n_schools() {
                let null = manipulable_priority(&e, i, s, 0);
                let best =
                    (1..e.students[i].actions.len()).map(|a| manipulable_priority(&e, i, s, a)).fold(null, f64::max);
                e.students[i].exog_priority[s] = if best > null { rng.random_range(null..=best) } else { null };
            }
        }
    }
    e
}

/// One school of capacity `capacity` (as a share of total mass) and `n`
/// students of mass `1/n` with i.i.d. uniform exogenous priorities; `w = 0`.
pub fn single_school_uniform(n: usize, capacity: f64, seed: u64) -> Economy {
    let mut rng = rng_for(seed, Stream::Geography, 1);
    let here = Address::new(0.0, 0.0);
    let students = (0..n)
        .map(|i| StudentType {
            weight: 1.0 / n as f64,
            ..student(i as u32 + 1, vec![1.0], vec![rng.random()], vec![here, Address::new(1.0, 0.0)])
        })
        .collect();
    Economy {
        schools: vec![School { id: SchoolId(1), capacity, location: here }],
        students,
        w: 0.0,
        gamma: 1.0,
        metric: DistanceMetric::Euclidean,
        d_max: 10.0,
    }
}
