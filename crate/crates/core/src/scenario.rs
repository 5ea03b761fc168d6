//! Scenario files: population, geography, preferences, reform timeline and
//! simulation settings, with validation and normalization.
//!
//! Reform I switches the manipulable weight from `w_pre` to `w_post` in
//! `reform_year`. Reform II, when configured, raises the deception cost for
//! students whose home municipality is in a flagged region, optionally
//! reverting a share of their strategic moves.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::Economy;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("scenario validation failed [{rule}]: {detail}")]
    Validation { rule: String, detail: String },
}

fn invalid(rule: &str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { rule: rule.into(), detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Population {
    /// Students per cohort.
    pub n_students: usize,
    pub cohorts: Vec<i32>,
}

impl Default for Population {
    fn default() -> Self {
        Self { n_students: 2000, cohorts: (2009..=2016).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchoolPlacement {
    /// Schools scattered around the city centres.
    NearCities,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geography {
    pub n_schools: usize,
    pub city_count: usize,
    /// Side of the square region.
    pub spread_km: f64,
    pub city_sd_km: f64,
    /// Share of students living around a city rather than uniformly.
    pub urban_share: f64,
    pub n_municipalities: usize,
    pub school_placement: SchoolPlacement,
    /// Total seats as a multiple of cohort size, split evenly across schools.
    pub capacity_ratio: f64,
    /// Distance of a relative's address from the school it is near.
    pub relative_radius_km: f64,
    /// Distance of an alternative (non-relative) address from home.
    pub alternative_radius_km: f64,
}

impl Default for Geography {
    fn default() -> Self {
        Self {
            n_schools: 12,
            city_count: 3,
            spread_km: 30.0,
            city_sd_km: 3.0,
            urban_share: 0.7,
            n_municipalities: 24,
            school_placement: SchoolPlacement::NearCities,
            capacity_ratio: 1.05,
            relative_radius_km: 1.0,
            alternative_radius_km: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preferences {
    pub intercept: f64,
    pub distance_weight: f64,
    pub quality_sd: f64,
    /// How much more high-GPA students value quality.
    pub gpa_taste: f64,
    pub noise_sd: f64,
    pub max_rol_len: usize,
}

impl Default for Preferences {
    fn default() -> Self {
        Self { intercept: 2.0, distance_weight: 0.1, quality_sd: 1.0, gpa_taste: 0.5, noise_sd: 1.0, max_rol_len: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    All,
    Municipalities,
    ExceptMunicipalities,
}

/// Which home municipalities a segment applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "municipalities", rename_all = "snake_case")]
pub enum RegionFilter {
    All,
    Municipalities(BTreeSet<u32>),
    ExceptMunicipalities(BTreeSet<u32>),
}

impl RegionFilter {
    pub fn contains(&self, municipality: u32) -> bool {
        match self {
            RegionFilter::All => true,
            RegionFilter::Municipalities(set) => set.contains(&municipality),
            RegionFilter::ExceptMunicipalities(set) => !set.contains(&municipality),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReformII {
    pub year: i32,
    pub municipalities: BTreeSet<u32>,
    pub gamma: f64,
    /// Probability that a strategic move by a student in the region is dropped.
    #[serde(default)]
    pub reversion_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub year: i32,
    pub region: RegionFilter,
    pub w: f64,
    pub gamma: f64,
    #[serde(default)]
    pub reversion_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Reforms {
    pub w_pre: f64,
    pub w_post: f64,
    pub gamma_pre: f64,
    pub gamma_post: f64,
    pub reform_year: i32,
    pub reform_ii: Option<ReformII>,
    /// Explicit timeline; when present it replaces the reform I/II shorthand.
    pub segments: Option<Vec<Segment>>,
}

impl Default for Reforms {
    fn default() -> Self {
        Self {
            w_pre: 0.0,
            w_post: 1.0,
            gamma_pre: 0.5,
            gamma_post: 0.5,
            reform_year: 2012,
            reform_ii: None,
            segments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    pub master_seed: u64,
    pub manipulation_reps: usize,
    pub household_move_rate: f64,
    pub individual_move_rate: f64,
    /// Probability that a student whose best response flips to deception moves.
    pub strategic_move_rate: f64,
    /// Municipalities above this demand quantile are treated.
    pub treated_quantile: f64,
    /// Cohort used for the counterfactual; defaults to the last cohort.
    pub counterfactual_year: Option<i32>,
    /// Classifier probabilities by subgroup index; estimated from the panel when absent.
    pub subgroup_probs: Option<BTreeMap<u8, f64>>,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            master_seed: 1,
            manipulation_reps: 150,
            household_move_rate: 0.025,
            individual_move_rate: 0.006,
            strategic_move_rate: 0.3,
            treated_quantile: 0.75,
            counterfactual_year: None,
            subgroup_probs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub population: Population,
    #[serde(default)]
    pub geography: Geography,
    #[serde(default)]
    pub preferences: Preferences,
    #[serde(default)]
    pub reforms: Reforms,
    #[serde(default)]
    pub simulation: Simulation,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            population: Population::default(),
            geography: Geography::default(),
            preferences: Preferences::default(),
            reforms: Reforms::default(),
            simulation: Simulation::default(),
        }
    }
}

/// Regime segments per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReformTimeline {
    pub segments: Vec<Segment>,
}

/// `(w, gamma, reversion_prob)` for one student.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub w: f64,
    pub gamma: f64,
    pub reversion_prob: f64,
}

impl ReformTimeline {
    pub fn from_config(cfg: &ScenarioConfig) -> ReformTimeline {
        if let Some(segments) = &cfg.reforms.segments {
            return ReformTimeline { segments: segments.clone() };
        }
        let r = &cfg.reforms;
        let mut segments = Vec::new();
        for &year in &cfg.population.cohorts {
            if year < r.reform_year {
                segments.push(Segment {
                    year,
                    region: RegionFilter::All,
                    w: r.w_pre,
                    gamma: r.gamma_pre,
                    reversion_prob: 0.0,
                });
                continue;
            }
            match &r.reform_ii {
                Some(ii) if year >= ii.year => {
                    segments.push(Segment {
                        year,
                        region: RegionFilter::Municipalities(ii.municipalities.clone()),
                        w: r.w_post,
                        gamma: ii.gamma,
                        reversion_prob: ii.reversion_prob,
                    });
                    segments.push(Segment {
                        year,
                        region: RegionFilter::ExceptMunicipalities(ii.municipalities.clone()),
                        w: r.w_post,
                        gamma: r.gamma_post,
                        reversion_prob: 0.0,
                    });
                }
                _ => segments.push(Segment {
                    year,
                    region: RegionFilter::All,
                    w: r.w_post,
                    gamma: r.gamma_post,
                    reversion_prob: 0.0,
                }),
            }
        }
        ReformTimeline { segments }
    }

    pub fn segments_for(&self, year: i32) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.year == year)
    }

    pub fn regime(&self, year: i32, municipality: u32) -> Option<Regime> {
        self.segments_for(year).find(|s| s.region.contains(municipality)).map(|s| Regime {
            w: s.w,
            gamma: s.gamma,
            reversion_prob: s.reversion_prob,
        })
    }

    /// The single `w` in force in `year`.
    pub fn w_for(&self, year: i32) -> Option<f64> {
        self.segments_for(year).next().map(|s| s.w)
    }

    /// Every year in `years` has segments covering each municipality exactly
    /// once, with one `w` per year.
    pub fn validate(&self, years: &[i32], n_municipalities: u32) -> Result<(), ScenarioError> {
        for s in &self.segments {
            if !(0.0..=1.0).contains(&s.w) {
                return Err(invalid("w_range", format!("year {}: w = {} outside [0,1]", s.year, s.w)));
            }
            if !(s.gamma > 0.0) || !s.gamma.is_finite() {
                return Err(invalid("gamma_positive", format!("year {}: gamma = {}", s.year, s.gamma)));
            }
            if !(0.0..=1.0).contains(&s.reversion_prob) {
                return Err(invalid("reversion_range", format!("year {}: {}", s.year, s.reversion_prob)));
            }
        }
        for &year in years {
            let segs: Vec<&Segment> = self.segments_for(year).collect();
            if segs.is_empty() {
                return Err(invalid("timeline_coverage", format!("year {year} has no regime segment")));
            }
            if segs.iter().any(|s| s.w != segs[0].w) {
                return Err(invalid("uniform_w", format!("year {year} mixes manipulable weights")));
            }
            for m in 0..n_municipalities {
                let hits = segs.iter().filter(|s| s.region.contains(m)).count();
                if hits == 0 {
                    return Err(invalid("timeline_coverage", format!("year {year}: municipality {m} uncovered")));
                }
                if hits > 1 {
                    return Err(invalid("region_overlap", format!("year {year}: municipality {m} in {hits} segments")));
                }
            }
        }
        Ok(())
    }
}

/// A loaded, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub timeline: ReformTimeline,
}

fn check(cond: bool, rule: &str, detail: impl Into<String>) -> Result<(), ScenarioError> {
    if cond {
        Ok(())
    } else {
        Err(invalid(rule, detail))
    }
}

pub fn validate_config(cfg: &ScenarioConfig) -> Result<ReformTimeline, ScenarioError> {
    check(
        cfg.schema_version == SCHEMA_VERSION,
        "schema_version",
        format!("unsupported version {}", cfg.schema_version),
    )?;
    let p = &cfg.population;
    check(p.n_students > 0, "positive_counts", "population.n_students must be positive")?;
    check(!p.cohorts.is_empty(), "positive_counts", "population.cohorts is empty")?;
    let distinct: BTreeSet<i32> = p.cohorts.iter().copied().collect();
    check(distinct.len() == p.cohorts.len(), "distinct_cohorts", "population.cohorts has duplicates")?;
    let g = &cfg.geography;
    check(
        g.n_schools > 0 && g.city_count > 0 && g.n_municipalities > 0,
        "positive_counts",
        "geography counts must be positive",
    )?;
    check(g.spread_km > 0.0 && g.spread_km.is_finite(), "positive_spread", "geography.spread_km must be positive")?;
    check(g.city_sd_km >= 0.0, "non_negative", "geography.city_sd_km")?;
    check((0.0..=1.0).contains(&g.urban_share), "share_range", "geography.urban_share")?;
    check(g.capacity_ratio > 0.0, "positive_capacity", "geography.capacity_ratio must be positive")?;
    check(g.relative_radius_km >= 0.0 && g.alternative_radius_km > 0.0, "non_negative", "geography radii")?;
    let pr = &cfg.preferences;
    check(pr.max_rol_len >= 1, "positive_counts", "preferences.max_rol_len")?;
    check(pr.noise_sd >= 0.0 && pr.quality_sd >= 0.0, "non_negative", "preference scales")?;
    let r = &cfg.reforms;
    for (name, w) in [("w_pre", r.w_pre), ("w_post", r.w_post)] {
        check((0.0..=1.0).contains(&w), "w_range", format!("reforms.{name} = {w}"))?;
    }
    for (name, v) in [("gamma_pre", r.gamma_pre), ("gamma_post", r.gamma_post)] {
        check(v > 0.0, "gamma_positive", format!("reforms.{name} = {v}"))?;
    }
    if let Some(ii) = &r.reform_ii {
        check(ii.gamma > 0.0, "gamma_positive", "reforms.reform_ii.gamma")?;
        check(
            ii.municipalities.iter().all(|&m| (m as usize) < g.n_municipalities),
            "region_exists",
            "reform_ii names a municipality outside the geography",
        )?;
    }
    let s = &cfg.simulation;
    check(s.manipulation_reps >= 1, "reps_positive", "simulation.manipulation_reps must be at least 1")?;
    for (name, v) in [
        ("household_move_rate", s.household_move_rate),
        ("individual_move_rate", s.individual_move_rate),
        ("strategic_move_rate", s.strategic_move_rate),
        ("treated_quantile", s.treated_quantile),
    ] {
        check((0.0..=1.0).contains(&v), "rate_range", format!("simulation.{name} = {v}"))?;
    }
    check(s.household_move_rate + s.individual_move_rate <= 1.0, "rate_range", "move rates sum above 1")?;
    if let Some(y) = s.counterfactual_year {
        check(p.cohorts.contains(&y), "counterfactual_year", format!("{y} is not a cohort year"))?;
    }
    if let Some(probs) = &s.subgroup_probs {
        for (&k, &v) in probs {
            check(k < 8 && (0.0..=1.0).contains(&v), "subgroup_probs", format!("subgroup {k}: {v}"))?;
        }
    }
    let timeline = ReformTimeline::from_config(cfg);
    timeline.validate(&p.cohorts, g.n_municipalities as u32)?;
    Ok(timeline)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let timeline = validate_config(&config)?;
    Ok(Scenario { config, timeline })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

/// Normalized form: every default filled in.
pub fn to_normalized_json(cfg: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

/// The cohort economy for `year`, with `(w, gamma)` resolved per region.
pub fn economy_for_year(scenario: &Scenario, year: i32) -> crate::Result<Economy> {
    Ok(crate::policy::generate_cohort(scenario, year)?.economy)
}
