//! Difference-in-differences on student-year move panels: the linear
//! probability model with year and municipality fixed effects, clustered by
//! municipality, plus placebo runs, subgroup splits, specification curves and
//! an optional cluster bootstrap.

mod ols;
mod panel;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ols::{fit_ols, Design, OlsFit, REFERENCE};
pub use panel::{
    assign_subgroups, median, quantile, read_panel_csv, validate_panel, write_panel_csv, PanelRecord, Subgroup,
    SubgroupFilter, PANEL_HEADER,
};

use crate::error::{Error, Result};
use crate::exec;
use crate::seed::{rng_for, Stream};

pub const INTERACTION: &str = "treated_x_post";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Treatment {
    /// The panel's own `treated` column.
    Column,
    /// Municipalities whose demand index exceeds this quantile across municipalities.
    DemandAbove {
        quantile: f64,
    },
    SupplyAbove {
        quantile: f64,
    },
}

impl Treatment {
    pub fn label(&self) -> String {
        match self {
            Treatment::Column => "treated".into(),
            Treatment::DemandAbove { quantile } => format!("demand>p{}", (quantile * 100.0).round()),
            Treatment::SupplyAbove { quantile } => format!("supply>p{}", (quantile * 100.0).round()),
        }
    }

    /// Treatment indicator per row.
    pub fn assign(&self, panel: &[PanelRecord]) -> Result<Vec<bool>> {
        let (pick, q): (fn(&PanelRecord) -> Option<f64>, f64) = match *self {
            Treatment::Column => return Ok(panel.iter().map(|r| r.treated == 1).collect()),
            Treatment::DemandAbove { quantile } => (|r| r.demand_index, quantile),
            Treatment::SupplyAbove { quantile } => (|r| r.supply_index, quantile),
        };
        let mut by_muni: BTreeMap<u32, f64> = BTreeMap::new();
        for r in panel {
            let v = pick(r).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{} needs an index on every row (municipality {})",
                    self.label(),
                    r.municipality
                ))
            })?;
            by_muni.entry(r.municipality).or_insert(v);
        }
        let values: Vec<f64> = by_muni.values().copied().collect();
        let cut = quantile(&values, q);
        Ok(panel.iter().map(|r| by_muni[&r.municipality] > cut).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Moved,
    /// Moves in the year before the application year.
    MovedPlacebo,
}

/// One regression specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DidSpec {
    pub outcome: Outcome,
    pub treatment: Treatment,
    /// Gender, parental income and parental education.
    pub controls: bool,
    pub gpa: bool,
    pub fixed_effects: bool,
}

impl Default for DidSpec {
    fn default() -> Self {
        Self { outcome: Outcome::Moved, treatment: Treatment::Column, controls: true, gpa: true, fixed_effects: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub spec: DidSpec,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Coefficient on treated × post.
    pub beta: f64,
    pub beta_se: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Mean outcome among untreated rows.
    pub mdv: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((self.coefficients[j], self.std_errors[j]))
    }
}

fn outcome_values(panel: &[PanelRecord], outcome: Outcome) -> Result<Vec<f64>> {
    panel
        .iter()
        .map(|r| match outcome {
            Outcome::Moved => Ok(r.moved as f64),
            Outcome::MovedPlacebo => r
                .moved_placebo
                .map(|v| v as f64)
                .ok_or_else(|| Error::InvalidInput(format!("student {} has no placebo outcome", r.student_id))),
        })
        .collect()
}

/// Whether `flag` is constant within every level of `key`.
fn absorbed_by<K: Ord + Copy>(keys: impl Iterator<Item = K>, flags: &[bool]) -> bool {
    let mut seen: BTreeMap<K, bool> = BTreeMap::new();
    for (k, &f) in keys.zip(flags) {
        if *seen.entry(k).or_insert(f) != f {
            return false;
        }
    }
    true
}

fn one_hot<K: Ord + Copy + std::fmt::Display>(prefix: &str, keys: &[K], names: &mut Vec<String>) -> (usize, Vec<u32>) {
    let levels: BTreeSet<K> = keys.iter().copied().collect();
    // The smallest level is the reference.
    let index: BTreeMap<K, u32> = levels.iter().skip(1).copied().zip(0..).collect();
    names.extend(index.keys().map(|k| format!("{prefix}_{k}")));
    (index.len(), keys.iter().map(|k| index.get(k).copied().unwrap_or(REFERENCE)).collect())
}

struct Built {
    design: Design,
    y: Vec<f64>,
    clusters: Vec<u32>,
    treated: Vec<bool>,
}

fn build(panel: &[PanelRecord], spec: &DidSpec) -> Result<Built> {
    if panel.is_empty() {
        return Err(Error::DegenerateDesign("empty sample".into()));
    }
    let y = outcome_values(panel, spec.outcome)?;
    let treated = spec.treatment.assign(panel)?;
    let post: Vec<bool> = panel.iter().map(|r| r.post == 1).collect();
    if !post.iter().any(|&p| p) {
        return Err(Error::DegenerateDesign("empty post period".into()));
    }
    if post.iter().all(|&p| p) {
        return Err(Error::DegenerateDesign("empty pre period".into()));
    }
    if !treated.iter().any(|&t| t) || treated.iter().all(|&t| t) {
        return Err(Error::DegenerateDesign("no variation in treatment".into()));
    }

    let mut cols: Vec<(String, Vec<f64>)> = vec![
        ("intercept".into(), vec![1.0; panel.len()]),
        (INTERACTION.into(), treated.iter().zip(&post).map(|(&t, &p)| (t && p) as u8 as f64).collect()),
    ];
    let years: Vec<i32> = panel.iter().map(|r| r.year).collect();
    let munis: Vec<u32> = panel.iter().map(|r| r.municipality).collect();
    if !spec.fixed_effects || !absorbed_by(munis.iter().copied(), &treated) {
        cols.push(("treated".into(), treated.iter().map(|&t| t as u8 as f64).collect()));
    }
    if !spec.fixed_effects || !absorbed_by(years.iter().copied(), &post) {
        cols.push(("post".into(), post.iter().map(|&p| p as u8 as f64).collect()));
    }

    let mut covariates: Vec<(&str, Vec<Option<f64>>)> = Vec::new();
    if spec.controls {
        covariates.push(("female", panel.iter().map(|r| r.female.map(f64::from)).collect()));
        covariates.push(("parental_income", panel.iter().map(|r| r.parental_income).collect()));
        covariates.push(("parental_education_years", panel.iter().map(|r| r.parental_education_years).collect()));
    }
    if spec.gpa {
        covariates.push(("gpa", panel.iter().map(|r| r.gpa).collect()));
    }
    for (name, values) in covariates {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        if present.is_empty() {
            log::warn!("control {name} is missing on every row; dropped");
            continue;
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        if present.len() == values.len() && present.iter().all(|&v| v == present[0]) {
            // Constant in this sample (e.g. gender within a gender cell).
            log::debug!("control {name} is constant in the sample; dropped");
            continue;
        }
        cols.push((name.into(), values.iter().map(|v| v.unwrap_or(mean)).collect()));
        if present.len() < values.len() {
            cols.push((format!("missing_{name}"), values.iter().map(|v| v.is_none() as u8 as f64).collect()));
        }
    }

    let n = panel.len();
    let n_dense = cols.len();
    let mut names: Vec<String> = cols.iter().map(|(n, _)| n.clone()).collect();
    let mut dense = vec![0.0; n * n_dense];
    for (c, (_, v)) in cols.iter().enumerate() {
        for i in 0..n {
            dense[i * n_dense + c] = v[i];
        }
    }
    let (block_sizes, levels) = if spec.fixed_effects {
        let (ny, ly) = one_hot("year", &years, &mut names);
        let (nm, lm) = one_hot("municipality", &munis, &mut names);
        (vec![ny, nm], ly.into_iter().zip(lm).flat_map(|(a, b)| [a, b]).collect())
    } else {
        (vec![], vec![])
    };
    Ok(Built { design: Design { names, n_dense, dense, block_sizes, levels, n_rows: n }, y, clusters: munis, treated })
}

/// The design matrix a specification produces, for inspection and oracles.
pub fn design_matrix(panel: &[PanelRecord], spec: &DidSpec) -> Result<(Design, Vec<f64>, Vec<u32>)> {
    let b = build(panel, spec)?;
    Ok((b.design, b.y, b.clusters))
}

/// `moved ~ treated×post [+ treated + post] [+ controls] [+ gpa] [+ year FE + municipality FE]`,
/// clustered by municipality. Treated and post main effects are included
/// only when the fixed effects do not absorb them.
pub fn fit_ols_fe(panel: &[PanelRecord], spec: &DidSpec) -> Result<RegressionFit> {
    let b = build(panel, spec)?;
    let fit = fit_ols(&b.design, &b.y, &b.clusters)?;
    let se = fit.std_errors();
    let j = fit.index_of(INTERACTION).expect("interaction column always present");
    let (sum, count) =
        b.y.iter().zip(&b.treated).filter(|(_, &t)| !t).fold((0.0, 0usize), |(s, c), (&y, _)| (s + y, c + 1));
    let k = fit.coefficients.len();
    Ok(RegressionFit {
        spec: *spec,
        beta: fit.coefficients[j],
        beta_se: se[j],
        covariance: (0..k).map(|r| (0..k).map(|c| fit.covariance[(r, c)]).collect()).collect(),
        std_errors: se,
        names: fit.names,
        coefficients: fit.coefficients,
        n_obs: fit.n_obs,
        n_clusters: fit.n_clusters,
        mdv: if count > 0 { sum / count as f64 } else { 0.0 },
        residuals: fit.residuals,
    })
}

/// Share of moves attributable to manipulation: `clamp(beta / share, 0, 1)`.
pub fn manipulation_probability(beta: f64, moved_share_treated_post: f64) -> Result<f64> {
    if !(moved_share_treated_post > 0.0) {
        return Err(Error::NoTreatedPostMovers);
    }
    if beta < 0.0 {
        log::warn!("negative interaction estimate {beta}; manipulation share clamped to 0");
    }
    Ok((beta / moved_share_treated_post).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidResult {
    pub filter: SubgroupFilter,
    pub fit: RegressionFit,
    pub treated_post_mover_share: f64,
    pub n_treated_post: usize,
    pub share: f64,
}

/// Regression on a subgroup followed by the manipulation share.
pub fn fit_did(panel: &[PanelRecord], filter: &SubgroupFilter, spec: &DidSpec) -> Result<DidResult> {
    let groups = assign_subgroups(panel);
    let sample: Vec<PanelRecord> =
        panel.iter().zip(&groups).filter(|(_, g)| filter.matches(**g)).map(|(r, _)| r.clone()).collect();
    if sample.is_empty() {
        return Err(Error::InvalidInput("subgroup is empty".into()));
    }
    did_on_sample(&sample, *filter, spec)
}

fn did_on_sample(sample: &[PanelRecord], filter: SubgroupFilter, spec: &DidSpec) -> Result<DidResult> {
    let fit = fit_ols_fe(sample, spec)?;
    let treated = spec.treatment.assign(sample)?;
    let y = outcome_values(sample, spec.outcome)?;
    let (movers, n_tp) = sample
        .iter()
        .zip(&treated)
        .zip(&y)
        .filter(|((r, &t), _)| t && r.post == 1)
        .fold((0.0, 0usize), |(m, n), (_, &v)| (m + v, n + 1));
    let tp_share = if n_tp > 0 { movers / n_tp as f64 } else { 0.0 };
    let share = manipulation_probability(fit.beta, tp_share)?;
    Ok(DidResult { filter, fit, treated_post_mover_share: tp_share, n_treated_post: n_tp, share })
}

/// Same specification on the penultimate-year move outcome.
pub fn run_placebo(panel: &[PanelRecord], spec: &DidSpec) -> Result<RegressionFit> {
    fit_ols_fe(panel, &DidSpec { outcome: Outcome::MovedPlacebo, ..*spec })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub subgroup: Subgroup,
    pub label: String,
    pub result: Option<DidResult>,
    pub error: Option<String>,
}

/// One DiD per gender × income × education cell; failures are recorded per cell.
pub fn subgroup_table(panel: &[PanelRecord], spec: &DidSpec) -> Vec<SubgroupRow> {
    let groups = assign_subgroups(panel);
    let cells: Vec<Subgroup> = Subgroup::all().collect();
    exec::map_slice(&cells, |&g| {
        let sample: Vec<PanelRecord> =
            panel.iter().zip(&groups).filter(|(_, h)| **h == g).map(|(r, _)| r.clone()).collect();
        let res = if sample.is_empty() {
            Err(Error::InvalidInput("subgroup is empty".into()))
        } else {
            did_on_sample(&sample, SubgroupFilter::exact(g), spec)
        };
        let (result, error) = match res {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        SubgroupRow { subgroup: g, label: g.label(), result, error }
    })
}

pub fn write_subgroup_csv<W: Write>(rows: &[SubgroupRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "subgroup",
        "female",
        "high_income",
        "high_education",
        "beta",
        "se",
        "mdv",
        "n_obs",
        "treated_post_mover_share",
        "share_manipulative",
        "error",
    ])?;
    for row in rows {
        let g = row.subgroup;
        let mut rec = vec![
            g.index().to_string(),
            (g.female as u8).to_string(),
            (g.high_income as u8).to_string(),
            (g.high_education as u8).to_string(),
        ];
        match &row.result {
            Some(r) => rec.extend([
                r.fit.beta.to_string(),
                r.fit.beta_se.to_string(),
                r.fit.mdv.to_string(),
                r.fit.n_obs.to_string(),
                r.treated_post_mover_share.to_string(),
                r.share.to_string(),
                String::new(),
            ]),
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 6));
                rec.push(row.error.clone().unwrap_or_default());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Controls × GPA × fixed effects × {demand>p50, demand>p75, demand>p90, supply>p75}.
pub fn standard_variants() -> Vec<DidSpec> {
    let treatments = [
        Treatment::DemandAbove { quantile: 0.5 },
        Treatment::DemandAbove { quantile: 0.75 },
        Treatment::DemandAbove { quantile: 0.9 },
        Treatment::SupplyAbove { quantile: 0.75 },
    ];
    let mut out = Vec::new();
    for treatment in treatments {
        for controls in [true, false] {
            for gpa in [true, false] {
                for fixed_effects in [true, false] {
                    out.push(DidSpec { outcome: Outcome::Moved, treatment, controls, gpa, fixed_effects });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecCurveRow {
    pub spec: DidSpec,
    pub fit: Option<RegressionFit>,
    pub error: Option<String>,
}

/// Fits every variant; a failing variant is recorded and the sweep continues.
pub fn spec_curve(panel: &[PanelRecord], variants: &[DidSpec]) -> Result<Vec<SpecCurveRow>> {
    if variants.is_empty() {
        return Err(Error::InvalidInput("no specification variants".into()));
    }
    Ok(exec::map_slice(variants, |spec| match fit_ols_fe(panel, spec) {
        Ok(fit) => SpecCurveRow { spec: *spec, fit: Some(fit), error: None },
        Err(e) => SpecCurveRow { spec: *spec, fit: None, error: Some(e.to_string()) },
    }))
}

pub fn write_spec_curve_csv<W: Write>(rows: &[SpecCurveRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "treatment",
        "controls",
        "gpa",
        "fixed_effects",
        "beta",
        "se",
        "ci_low",
        "ci_high",
        "n_obs",
        "error",
    ])?;
    for row in rows {
        let s = &row.spec;
        let mut rec = vec![
            s.treatment.label(),
            (s.controls as u8).to_string(),
            (s.gpa as u8).to_string(),
            (s.fixed_effects as u8).to_string(),
        ];
        match &row.fit {
            Some(f) => rec.extend([
                f.beta.to_string(),
                f.beta_se.to_string(),
                (f.beta - 1.96 * f.beta_se).to_string(),
                (f.beta + 1.96 * f.beta_se).to_string(),
                f.n_obs.to_string(),
                String::new(),
            ]),
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 5));
                rec.push(row.error.clone().unwrap_or_default());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub reps: usize,
    pub failed: usize,
    pub se: f64,
    pub betas: Vec<f64>,
}

/// Cluster bootstrap of the interaction: resample municipalities with
/// replacement, each draw becoming its own cluster. Draws whose design is
/// degenerate are counted in `failed`.
pub fn cluster_bootstrap(panel: &[PanelRecord], spec: &DidSpec, reps: usize, seed: u64) -> Result<BootstrapSummary> {
    let mut by_muni: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in panel.iter().enumerate() {
        by_muni.entry(r.municipality).or_default().push(i);
    }
    let groups: Vec<&Vec<usize>> = by_muni.values().collect();
    let g = groups.len();
    if g < 2 {
        return Err(Error::TooFewClusters(g));
    }
    let draws = exec::map_range(reps, |rep| {
        let mut rng = rng_for(seed, Stream::Bootstrap, rep as u64);
        let mut sample = Vec::with_capacity(panel.len());
        for k in 0..g {
            let src = groups[rng.random_range(0..g)];
            sample.extend(src.iter().map(|&i| PanelRecord { municipality: k as u32, ..panel[i].clone() }));
        }
        fit_ols_fe(&sample, spec).ok().map(|f| f.beta)
    });
    let betas: Vec<f64> = draws.iter().flatten().copied().collect();
    if betas.len() < 2 {
        return Err(Error::DegenerateDesign("fewer than two bootstrap draws succeeded".into()));
    }
    let mean = betas.iter().sum::<f64>() / betas.len() as f64;
    let var = betas.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (betas.len() - 1) as f64;
    Ok(BootstrapSummary { reps, failed: reps - betas.len(), se: var.sqrt(), betas })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_panel() -> Vec<PanelRecord> {
        let mut out = Vec::new();
        let mut id = 0;
        for muni in 0..4u32 {
            for year in [2010, 2011, 2012, 2013] {
                for k in 0..3 {
                    id += 1;
                    let treated = muni >= 2;
                    let post = year >= 2012;
                    out.push(PanelRecord {
                        student_id: id,
                        year,
                        municipality: muni,
                        moved: ((id * 7 + k) % 5 == 0 || (treated && post && k == 0)) as u8,
                        moved_placebo: Some(((id * 3) % 7 == 0) as u8),
                        treated: treated as u8,
                        post: post as u8,
                        female: Some((id % 2) as u8),
                        parental_income: if id % 9 == 0 { None } else { Some(300.0 + (id * 37 % 101) as f64) },
                        parental_education_years: Some(10.0 + (id % 6) as f64),
                        gpa: Some(((id * 13) % 17) as f64 / 17.0 - 0.5),
                        demand_index: Some(muni as f64),
                        supply_index: Some(3.0 - muni as f64),
                        subgroup: None,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn fe_spec_drops_absorbed_main_effects() {
        let fit = fit_ols_fe(&tiny_panel(), &DidSpec::default()).unwrap();
        assert!(!fit.names.contains(&"treated".to_string()));
        assert!(!fit.names.contains(&"post".to_string()));
        assert!(fit.names.contains(&"missing_parental_income".to_string()));
        assert!(!fit.names.contains(&"missing_gpa".to_string()));
        assert!(fit.names.contains(&"year_2011".to_string()));
        assert!(!fit.names.contains(&"year_2010".to_string()));
        assert!(!fit.names.contains(&"municipality_0".to_string()));
        assert_eq!(fit.n_clusters, 4);
    }

    #[test]
    fn no_fe_spec_keeps_main_effects() {
        let spec = DidSpec { fixed_effects: false, ..Default::default() };
        let fit = fit_ols_fe(&tiny_panel(), &spec).unwrap();
        assert!(fit.names.contains(&"treated".to_string()));
        assert!(fit.names.contains(&"post".to_string()));
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let panel = tiny_panel();
        let spec = DidSpec::default();
        let fit = fit_ols_fe(&panel, &spec).unwrap();
        let (design, _, _) = design_matrix(&panel, &spec).unwrap();
        let xe = design.xt_times(&fit.residuals);
        assert!(xe.iter().all(|v| v.abs() < 1e-8), "{xe:?}");
    }

    #[test]
    fn outcome_shift_only_moves_intercept() {
        let panel = tiny_panel();
        let spec = DidSpec { controls: false, gpa: false, ..Default::default() };
        let base = fit_ols_fe(&panel, &spec).unwrap();
        // Shift by adding a constant: flip every outcome (y -> 1 - y), then negate.
        let flipped: Vec<PanelRecord> = panel.iter().map(|r| PanelRecord { moved: 1 - r.moved, ..r.clone() }).collect();
        let other = fit_ols_fe(&flipped, &spec).unwrap();
        assert!((base.beta + other.beta).abs() < 1e-12);
        assert!((base.beta_se - other.beta_se).abs() < 1e-12);
    }

    #[test]
    fn manipulation_share_examples() {
        assert_eq!(manipulation_probability(0.01, 0.02).unwrap(), 0.5);
        assert!((manipulation_probability(0.013, 0.019).unwrap() - 0.696).abs() <= 0.02);
        assert_eq!(manipulation_probability(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(manipulation_probability(-0.01, 0.3).unwrap(), 0.0);
        assert!(matches!(manipulation_probability(0.01, 0.0), Err(Error::NoTreatedPostMovers)));
    }

    #[test]
    fn placebo_without_post_rows_fails() {
        let panel: Vec<PanelRecord> = tiny_panel().into_iter().map(|r| PanelRecord { post: 0, ..r }).collect();
        assert!(matches!(run_placebo(&panel, &DidSpec::default()), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn singleton_sweep_equals_direct_fit() {
        let panel = tiny_panel();
        let spec = DidSpec { treatment: Treatment::DemandAbove { quantile: 0.5 }, ..Default::default() };
        let rows = spec_curve(&panel, &[spec]).unwrap();
        assert_eq!(rows[0].fit.as_ref().unwrap(), &fit_ols_fe(&panel, &spec).unwrap());
    }

    #[test]
    fn demand_treatment_uses_municipality_quantile() {
        let panel = tiny_panel();
        let t = Treatment::DemandAbove { quantile: 0.5 }.assign(&panel).unwrap();
        for (r, &flag) in panel.iter().zip(&t) {
            assert_eq!(flag, r.municipality >= 2);
        }
    }

    #[test]
    fn standard_sweep_has_32_variants() {
        assert_eq!(standard_variants().len(), 32);
    }
}
