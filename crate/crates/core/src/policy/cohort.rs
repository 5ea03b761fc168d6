//! Spatial cohorts: schools around cities, students in Voronoi
//! municipalities, random-utility preferences, and address moves.
//!
//! Baseline moves (household and individual) happen at fixed rates in every
//! year. After the reform, students whose best response at the anticipated
//! cutoffs involves deception also move strategically, to their
//! entry-maximizing address, with probability `strategic_move_rate`.
//! Anticipated cutoffs come from an IA run on truthful lists with everyone at
//! their home address.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::MoveEvent;
use crate::deception::individual_demand;
use crate::econometrics::{median, quantile, PanelRecord, Subgroup};
use crate::error::{Error, Result};
use crate::exec;
use crate::market::{
    Address, Covariates, CutoffVector, DistanceMetric, Economy, School, SchoolId, StudentId, StudentType,
};
use crate::mechanisms::{run_ia, Rols};
use crate::scenario::{ReformTimeline, Scenario, SchoolPlacement};
use crate::seed::{derive, rng_for, Stream};

/// Year-invariant parts of a scenario: places, schools and which
/// municipalities count as treated.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub cities: Vec<Address>,
    pub municipality_centers: Vec<Address>,
    pub schools: Vec<School>,
    pub quality: Vec<f64>,
    /// Mean first-choice oversubscription ratio of residents, reference cohort.
    pub demand_index: Vec<f64>,
    /// Seats located in the municipality per resident, reference cohort.
    pub supply_index: Vec<f64>,
    pub treated: Vec<bool>,
    pub income_median: f64,
    pub education_median: f64,
}

/// One application cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub year: i32,
    pub economy: Economy,
    pub rols: Rols,
    pub events: Vec<MoveEvent>,
    /// Action each student actually registers at (0 for non-movers).
    pub baseline_actions: Vec<usize>,
    /// Best response at the anticipated cutoffs uses deception.
    pub flipped: Vec<bool>,
    pub strategic: Vec<bool>,
    pub placebo_moved: Vec<bool>,
    pub anticipated_cutoffs: CutoffVector,
    pub post: bool,
}

fn clamp_to(p: Address, side: f64) -> Address {
    Address::new(p.x.clamp(0.0, side), p.y.clamp(0.0, side))
}

fn uniform_point(rng: &mut ChaCha8Rng, side: f64) -> Address {
    Address::new(rng.random::<f64>() * side, rng.random::<f64>() * side)
}

fn near(rng: &mut ChaCha8Rng, centre: Address, sd: f64, side: f64) -> Address {
    let n = Normal::new(0.0, sd.max(0.0)).expect("valid normal");
    clamp_to(Address::new(centre.x + n.sample(rng), centre.y + n.sample(rng)), side)
}

/// Uniform point in a disc.
fn in_disc(rng: &mut ChaCha8Rng, centre: Address, radius: f64, side: f64) -> Address {
    let r = radius * rng.random::<f64>().sqrt();
    let t = std::f64::consts::TAU * rng.random::<f64>();
    clamp_to(Address::new(centre.x + r * t.cos(), centre.y + r * t.sin()), side)
}

fn nearest(points: &[Address], p: &Address) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, q) in points.iter().enumerate() {
        let d = q.distance(p);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

struct Drawn {
    municipality: u32,
    female: bool,
    income: f64,
    education: f64,
    gpa: f64,
    utilities: Vec<f64>,
    exog: Vec<f64>,
    actions: Vec<Address>,
}

fn draw_students(
    s: &Scenario,
    world_schools: &[School],
    quality: &[f64],
    cities: &[Address],
    munis: &[Address],
    year: i32,
) -> Vec<Drawn> {
    let cfg = &s.config;
    let g = &cfg.geography;
    let p = &cfg.preferences;
    let side = g.spread_km;
    let mut rng = rng_for(cfg.simulation.master_seed, Stream::Cohort, year as u32 as u64);
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    (0..cfg.population.n_students)
        .map(|_| {
            let home = if rng.random::<f64>() < g.urban_share {
                let c = cities[rng.random_range(0..cities.len())];
                near(&mut rng, c, g.city_sd_km, side)
            } else {
                uniform_point(&mut rng, side)
            };
            let ses: f64 = std.sample(&mut rng);
            let female = rng.random::<f64>() < 0.5;
            let income = (5.9 + 0.5 * ses).exp();
            let education = 13.0 + 2.0 * (0.6 * ses + 0.8 * std.sample(&mut rng));
            let gpa = 0.4 * ses + 0.84f64.sqrt() * std.sample(&mut rng);
            let utilities: Vec<f64> = world_schools
                .iter()
                .zip(quality)
                .map(|(sc, &q)| {
                    p.intercept + q * (1.0 + p.gpa_taste * gpa) - p.distance_weight * home.distance(&sc.location)
                        + p.noise_sd * std.sample(&mut rng)
                })
                .collect();
            let exog: Vec<f64> = (0..world_schools.len()).map(|_| rng.random()).collect();
            // A relative near the favourite school half the time, near a random one otherwise.
            let favourite = (0..utilities.len()).max_by(|&a, &b| utilities[a].total_cmp(&utilities[b])).unwrap_or(0);
            let target = if rng.random::<f64>() < 0.5 { favourite } else { rng.random_range(0..world_schools.len()) };
            let relative = in_disc(&mut rng, world_schools[target].location, g.relative_radius_km, side);
            let alternative = in_disc(&mut rng, home, g.alternative_radius_km, side);
            Drawn {
                municipality: nearest(munis, &home) as u32,
                female,
                income,
                education,
                gpa,
                utilities,
                exog,
                actions: vec![home, relative, alternative],
            }
        })
        .collect()
}

/// Places cities, municipalities and schools, then classifies municipalities
/// by demand using the first cohort.
pub fn build_world(s: &Scenario) -> Result<World> {
    let cfg = &s.config;
    let g = &cfg.geography;
    let side = g.spread_km;
    let mut rng = rng_for(cfg.simulation.master_seed, Stream::Geography, 0);
    let cities: Vec<Address> = (0..g.city_count).map(|_| uniform_point(&mut rng, side)).collect();
    let municipality_centers: Vec<Address> = (0..g.n_municipalities).map(|_| uniform_point(&mut rng, side)).collect();
    let seats = ((g.capacity_ratio * cfg.population.n_students as f64) / g.n_schools as f64).round().max(1.0);
    let quality_dist = Normal::new(0.0, cfg.preferences.quality_sd).expect("valid normal");
    let mut schools = Vec::with_capacity(g.n_schools);
    let mut quality = Vec::with_capacity(g.n_schools);
    for k in 0..g.n_schools {
        let location = match g.school_placement {
            SchoolPlacement::NearCities => {
                let c = cities[rng.random_range(0..cities.len())];
                near(&mut rng, c, g.city_sd_km, side)
            }
            SchoolPlacement::Uniform => uniform_point(&mut rng, side),
        };
        schools.push(School { id: SchoolId(k as u32 + 1), capacity: seats, location });
        quality.push(quality_dist.sample(&mut rng));
    }
    if schools.len() > 1 && schools.iter().all(|sc| sc.location.distance(&schools[0].location) < 1e-9) {
        return Err(Error::DegenerateGeometry("all schools share one location".into()));
    }

    let reference_year = cfg.population.cohorts[0];
    let drawn = draw_students(s, &schools, &quality, &cities, &municipality_centers, reference_year);
    let n_m = g.n_municipalities;
    let cap = cfg.preferences.max_rol_len;
    let mut first_listed = vec![0.0; schools.len()];
    let firsts: Vec<Option<usize>> = drawn
        .iter()
        .map(|d| {
            let st = StudentType {
                id: StudentId(0),
                weight: 1.0,
                utilities: d.utilities.clone(),
                exog_priority: vec![],
                actions: vec![],
                covariates: Covariates::default(),
                deception_surcharge: 0.0,
            };
            st.preference_order().into_iter().take(cap).next()
        })
        .collect();
    for f in firsts.iter().flatten() {
        first_listed[*f] += 1.0;
    }
    let ratio: Vec<f64> = schools.iter().zip(&first_listed).map(|(sc, &f)| f / sc.capacity).collect();
    let mut residents = vec![0.0; n_m];
    let mut demand_sum = vec![0.0; n_m];
    for (d, f) in drawn.iter().zip(&firsts) {
        let m = d.municipality as usize;
        residents[m] += 1.0;
        demand_sum[m] += f.map_or(0.0, |s| ratio[s]);
    }
    let mut seats_in = vec![0.0; n_m];
    for sc in &schools {
        seats_in[nearest(&municipality_centers, &sc.location)] += sc.capacity;
    }
    let safe = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let demand_index: Vec<f64> = (0..n_m).map(|m| safe(demand_sum[m], residents[m])).collect();
    let supply_index: Vec<f64> = (0..n_m).map(|m| safe(seats_in[m], residents[m])).collect();
    let cut = quantile(&demand_index, cfg.simulation.treated_quantile);
    let treated = demand_index.iter().map(|&d| d > cut).collect();
    Ok(World {
        cities,
        municipality_centers,
        schools,
        quality,
        demand_index,
        supply_index,
        treated,
        income_median: median(drawn.iter().map(|d| d.income)),
        education_median: median(drawn.iter().map(|d| d.education)),
    })
}

pub fn generate_cohort(s: &Scenario, year: i32) -> Result<Cohort> {
    generate_cohort_in(&build_world(s)?, s, year)
}

fn regime_or_err(t: &ReformTimeline, year: i32, m: u32) -> Result<crate::scenario::Regime> {
    t.regime(year, m).ok_or_else(|| Error::InvalidInput(format!("year {year} is not covered by the reform timeline")))
}

/// Cohort for `year` in an already built world.
pub fn generate_cohort_in(world: &World, s: &Scenario, year: i32) -> Result<Cohort> {
    let cfg = &s.config;
    let sim = &cfg.simulation;
    let drawn = draw_students(s, &world.schools, &world.quality, &world.cities, &world.municipality_centers, year);
    let w = s
        .timeline
        .w_for(year)
        .ok_or_else(|| Error::InvalidInput(format!("year {year} is not covered by the reform timeline")))?;
    let regimes = drawn.iter().map(|d| regime_or_err(&s.timeline, year, d.municipality)).collect::<Result<Vec<_>>>()?;
    let gamma = regimes.iter().map(|r| r.gamma).fold(f64::INFINITY, f64::min);
    let post = year >= cfg.reforms.reform_year;

    let students: Vec<StudentType> = drawn
        .iter()
        .zip(&regimes)
        .enumerate()
        .map(|(i, (d, r))| StudentType {
            id: StudentId(i as u32 + 1),
            weight: 1.0,
            utilities: d.utilities.clone(),
            exog_priority: d.exog.clone(),
            actions: d.actions.clone(),
            covariates: Covariates {
                cohort_year: year,
                municipality: d.municipality,
                treated: world.treated[d.municipality as usize],
                post,
                parental_income: d.income,
                gpa: d.gpa,
                female: d.female,
                parental_education_years: d.education,
            },
            deception_surcharge: r.gamma - gamma,
        })
        .collect();
    let side = cfg.geography.spread_km;
    let economy = Economy {
        schools: world.schools.clone(),
        students,
        w,
        gamma,
        metric: DistanceMetric::Euclidean,
        d_max: side * std::f64::consts::SQRT_2,
    };
    let rols = Rols::truthful(&economy, Some(cfg.preferences.max_rol_len));

    let n = economy.n_students();
    let lottery_seed = derive(sim.master_seed, Stream::Lottery, year as u32 as u64);
    let anticipated = run_ia(&economy, &rols, &vec![0; n], lottery_seed)?.cutoffs;
    let decisions = exec::map_range(n, |i| individual_demand(&economy, i, &anticipated));
    let flipped: Vec<bool> = decisions.iter().map(|d| d.with_deception).collect();

    let mut rng = rng_for(derive(sim.master_seed, Stream::Cohort, year as u32 as u64), Stream::Panel, 0);
    let mut events = Vec::new();
    let mut baseline_actions = vec![0; n];
    let mut strategic = vec![false; n];
    let mut placebo_moved = vec![false; n];
    for i in 0..n {
        let st = &economy.students[i];
        let u_strategic: f64 = rng.random();
        let u_revert: f64 = rng.random();
        let u_move: f64 = rng.random();
        let u_dest: f64 = rng.random();
        let day = rng.random_range(0..=super::MOVE_WINDOW_DAYS);
        placebo_moved[i] = rng.random::<f64>() < sim.individual_move_rate;

        let wants = post && flipped[i] && u_strategic < sim.strategic_move_rate;
        strategic[i] = wants && u_revert >= regimes[i].reversion_prob;
        let (action, household) = if strategic[i] {
            (decisions[i].action_used, false)
        } else if u_move < sim.household_move_rate {
            (2, true)
        } else if u_move < sim.household_move_rate + sim.individual_move_rate {
            (if u_dest < 0.5 { 1 } else { 2 }, false)
        } else {
            continue;
        };
        baseline_actions[i] = action;
        let c = &st.covariates;
        events.push(MoveEvent {
            student: st.id,
            from: st.actions[0],
            to: st.actions[action],
            day_offset: day,
            household_move: household,
            to_relative: action == 1,
            action,
            treated_post: c.treated && c.post,
            subgroup: subgroup_of(world, c).index(),
        });
    }

    Ok(Cohort {
        year,
        economy,
        rols,
        events,
        baseline_actions,
        flipped,
        strategic,
        placebo_moved,
        anticipated_cutoffs: anticipated,
        post,
    })
}

fn subgroup_of(world: &World, c: &Covariates) -> Subgroup {
    Subgroup {
        female: c.female,
        high_income: c.parental_income > world.income_median,
        high_education: c.parental_education_years > world.education_median,
    }
}

impl Cohort {
    /// One panel row per student; `moved` counts individual (non-household) moves only.
    pub fn panel_rows(&self, world: &World) -> Vec<PanelRecord> {
        let mut moved = vec![false; self.economy.n_students()];
        for ev in self.events.iter().filter(|e| !e.household_move) {
            if let Some(i) = self.economy.student_index(ev.student) {
                moved[i] = true;
            }
        }
        self.economy
            .students
            .iter()
            .enumerate()
            .map(|(i, st)| {
                let c = &st.covariates;
                let m = c.municipality as usize;
                PanelRecord {
                    student_id: st.id.0,
                    year: self.year,
                    municipality: c.municipality,
                    moved: moved[i] as u8,
                    moved_placebo: Some(self.placebo_moved[i] as u8),
                    treated: c.treated as u8,
                    post: c.post as u8,
                    female: Some(c.female as u8),
                    parental_income: Some(c.parental_income),
                    parental_education_years: Some(c.parental_education_years),
                    gpa: Some(c.gpa),
                    demand_index: Some(world.demand_index[m]),
                    supply_index: Some(world.supply_index[m]),
                    subgroup: Some(subgroup_of(world, c).index()),
                }
            })
            .collect()
    }
}

/// Every cohort of the scenario (generated in parallel) and the stacked panel.
pub fn generate_panel(s: &Scenario) -> Result<(World, Vec<Cohort>, Vec<PanelRecord>)> {
    let world = build_world(s)?;
    let years = &s.config.population.cohorts;
    let cohorts = exec::try_map_range(years.len(), |k| generate_cohort_in(&world, s, years[k]))?;
    let panel = cohorts.iter().flat_map(|c| c.panel_rows(&world)).collect();
    Ok((world, cohorts, panel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::validate_economy;
    use crate::scenario::parse_scenario;

    fn small() -> Scenario {
        parse_scenario(
            r#"{"population": {"n_students": 300, "cohorts": [2010, 2013]},
                "geography": {"n_schools": 5, "n_municipalities": 8},
                "simulation": {"strategic_move_rate": 1.0}}"#,
        )
        .unwrap()
    }

    #[test]
    fn identical_seeds_identical_cohorts() {
        let s = small();
        let a = generate_cohort(&s, 2013).unwrap();
        let b = generate_cohort(&s, 2013).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.economy.to_json().unwrap(), b.economy.to_json().unwrap());
    }

    #[test]
    fn cohorts_are_valid_economies() {
        let s = small();
        for year in [2010, 2013] {
            let c = generate_cohort(&s, year).unwrap();
            assert!(validate_economy(&c.economy).is_empty());
            assert!(c.rols.validate(&c.economy, Some(5)).is_ok());
            for ev in &c.events {
                assert_ne!(ev.from, ev.to);
                assert!(ev.day_offset <= 151);
            }
        }
    }

    #[test]
    fn no_strategic_moves_before_reform() {
        let c = generate_cohort(&small(), 2010).unwrap();
        assert_eq!(c.economy.w, 0.0);
        assert!(c.flipped.iter().all(|&f| !f));
        assert!(c.strategic.iter().all(|&f| !f));
    }

    #[test]
    fn strategic_moves_after_reform() {
        let c = generate_cohort(&small(), 2013).unwrap();
        assert_eq!(c.economy.w, 1.0);
        assert!(c.strategic.iter().any(|&f| f));
        for (i, &st) in c.strategic.iter().enumerate() {
            if st {
                assert!(c.flipped[i]);
                assert_ne!(c.baseline_actions[i], 0);
            }
        }
    }

    #[test]
    fn one_school_no_noise_everyone_lists_it() {
        let s = parse_scenario(
            r#"{"population": {"n_students": 100, "cohorts": [2010]},
                "geography": {"n_schools": 1},
                "preferences": {"noise_sd": 0.0, "distance_weight": 0.01}}"#,
        )
        .unwrap();
        let c = generate_cohort(&s, 2010).unwrap();
        for st in &c.economy.students {
            assert_eq!(c.rols.get(st.id).unwrap().0, vec![SchoolId(1)]);
        }
    }

    #[test]
    fn co_located_schools_rejected() {
        let s = parse_scenario(r#"{"geography": {"n_schools": 3, "city_count": 1, "city_sd_km": 0.0}}"#).unwrap();
        assert!(matches!(build_world(&s), Err(Error::DegenerateGeometry(_))));
    }
}
