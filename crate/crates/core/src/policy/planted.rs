//! Panels with a known treated × post effect on move probabilities, for
//! checking that the estimator and the manipulation-share formula recover
//! what was planted.
//!
//! Move probability is additive: `base + municipality effect + year trend +
//! effect[subgroup] · treated · post`, so the linear probability model with
//! year and municipality fixed effects is correctly specified. The placebo
//! outcome shares the same base, municipality and trend terms but carries
//! `placebo_effect` instead.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::econometrics::{quantile, PanelRecord, Subgroup};
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum PlantedEffects {
    /// Same additive effect for every subgroup.
    Uniform(f64),
    /// Additive effect per subgroup index.
    BySubgroup([f64; 8]),
    /// Target share of treated-post moves that are manipulative, per subgroup;
    /// converted to additive effects against the treated-post base rate.
    SharesBySubgroup([f64; 8]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDgp {
    pub n_municipalities: usize,
    pub years: Vec<i32>,
    pub reform_year: i32,
    pub students_per_cell: usize,
    pub treated_quantile: f64,
    pub base_rate: f64,
    pub municipality_sd: f64,
    /// Added per year since the first year, in both groups.
    pub year_trend: f64,
    pub effects: PlantedEffects,
    pub placebo_effect: f64,
}

impl Default for PanelDgp {
    fn default() -> Self {
        Self {
            n_municipalities: 40,
            years: (2008..=2015).collect(),
            reform_year: 2012,
            students_per_cell: 300,
            treated_quantile: 0.75,
            base_rate: 0.006,
            municipality_sd: 0.0,
            year_trend: 0.0,
            effects: PlantedEffects::Uniform(0.006),
            placebo_effect: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPanel {
    pub panel: Vec<PanelRecord>,
    /// Additive effect actually planted, per subgroup.
    pub effects: [f64; 8],
    /// Expected manipulative share of treated-post moves, per subgroup.
    pub shares: [f64; 8],
    /// Mean non-manipulative move probability in treated-post cells.
    pub treated_post_base: f64,
    /// Realized treated-post movers and manipulative movers, per subgroup.
    pub treated_post_movers: [usize; 8],
    pub manipulative_movers: [usize; 8],
}

pub fn simulate_planted_panel(dgp: &PanelDgp, seed: u64) -> PlantedPanel {
    let mut rng = rng_for(seed, Stream::Panel, 0);
    let n_m = dgp.n_municipalities;
    let demand: Vec<f64> = (0..n_m).map(|_| rng.random()).collect();
    let supply: Vec<f64> = (0..n_m).map(|_| rng.random()).collect();
    let cut = quantile(&demand, dgp.treated_quantile);
    let treated: Vec<bool> = demand.iter().map(|&d| d > cut).collect();
    let muni_noise = Normal::new(0.0, dgp.municipality_sd).expect("valid normal");
    let muni_effect: Vec<f64> = (0..n_m).map(|_| muni_noise.sample(&mut rng)).collect();
    let first = dgp.years.iter().copied().min().unwrap_or(0);
    let base = |m: usize, year: i32| dgp.base_rate + muni_effect[m] + dgp.year_trend * (year - first) as f64;

    let tp_cells: Vec<f64> = (0..n_m)
        .filter(|&m| treated[m])
        .flat_map(|m| dgp.years.iter().filter(|&&y| y >= dgp.reform_year).map(move |&y| (m, y)))
        .map(|(m, y)| base(m, y).clamp(0.0, 1.0))
        .collect();
    let treated_post_base =
        if tp_cells.is_empty() { 0.0 } else { tp_cells.iter().sum::<f64>() / tp_cells.len() as f64 };
    let effects: [f64; 8] = match &dgp.effects {
        PlantedEffects::Uniform(e) => [*e; 8],
        PlantedEffects::BySubgroup(e) => *e,
        PlantedEffects::SharesBySubgroup(s) => s.map(|p| p / (1.0 - p) * treated_post_base),
    };
    let shares = effects.map(|e| if e + treated_post_base > 0.0 { e / (e + treated_post_base) } else { 0.0 });

    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let mut panel = Vec::with_capacity(n_m * dgp.years.len() * dgp.students_per_cell);
    let mut tp_movers = [0usize; 8];
    let mut manip = [0usize; 8];
    let mut id = 0u32;
    for &year in &dgp.years {
        let post = year >= dgp.reform_year;
        for m in 0..n_m {
            let p0 = base(m, year);
            for _ in 0..dgp.students_per_cell {
                id += 1;
                let g = Subgroup::from_index(rng.random_range(0..8u8));
                let gi = g.index() as usize;
                let tp = treated[m] && post;
                let u: f64 = rng.random();
                let lift = if tp { effects[gi] } else { 0.0 };
                let moved = u < p0 + lift;
                if tp && moved {
                    tp_movers[gi] += 1;
                    if u >= p0 {
                        manip[gi] += 1;
                    }
                }
                let placebo = rng.random::<f64>() < p0 + if tp { dgp.placebo_effect } else { 0.0 };
                let income_draw: f64 = rng.random();
                let educ_draw: f64 = rng.random();
                panel.push(PanelRecord {
                    student_id: id,
                    year,
                    municipality: m as u32,
                    moved: moved as u8,
                    moved_placebo: Some(placebo as u8),
                    treated: treated[m] as u8,
                    post: post as u8,
                    female: Some(g.female as u8),
                    parental_income: Some(if g.high_income { 400.0 } else { 200.0 } + 200.0 * income_draw),
                    parental_education_years: Some(if g.high_education { 14.0 } else { 10.0 } + 4.0 * educ_draw),
                    gpa: Some(std.sample(&mut rng)),
                    demand_index: Some(demand[m]),
                    supply_index: Some(supply[m]),
                    subgroup: Some(g.index()),
                });
            }
        }
    }
    PlantedPanel {
        panel,
        effects,
        shares,
        treated_post_base,
        treated_post_movers: tp_movers,
        manipulative_movers: manip,
    }
}
