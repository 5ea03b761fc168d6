//! Student-year panel rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One student-year observation.
///
/// Binary fields are stored as `0/1`. Covariates may be missing (empty CSV
/// cell). `subgroup`, when present, overrides the median-based subgroup split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub student_id: u32,
    pub year: i32,
    pub municipality: u32,
    pub moved: u8,
    #[serde(default)]
    pub moved_placebo: Option<u8>,
    pub treated: u8,
    pub post: u8,
    #[serde(default)]
    pub female: Option<u8>,
    #[serde(default)]
    pub parental_income: Option<f64>,
    #[serde(default)]
    pub parental_education_years: Option<f64>,
    #[serde(default)]
    pub gpa: Option<f64>,
    #[serde(default)]
    pub demand_index: Option<f64>,
    #[serde(default)]
    pub supply_index: Option<f64>,
    #[serde(default)]
    pub subgroup: Option<u8>,
}

pub const PANEL_HEADER: [&str; 14] = [
    "student_id",
    "year",
    "municipality",
    "moved",
    "moved_placebo",
    "treated",
    "post",
    "female",
    "parental_income",
    "parental_education_years",
    "gpa",
    "demand_index",
    "supply_index",
    "subgroup",
];

fn check_binary(row: usize, name: &str, v: Option<u8>) -> Result<()> {
    match v {
        Some(x) if x > 1 => Err(Error::InvalidInput(format!("row {row}: {name} = {x}, expected 0 or 1"))),
        _ => Ok(()),
    }
}

pub fn validate_panel(panel: &[PanelRecord]) -> Result<()> {
    for (k, r) in panel.iter().enumerate() {
        check_binary(k, "moved", Some(r.moved))?;
        check_binary(k, "moved_placebo", r.moved_placebo)?;
        check_binary(k, "treated", Some(r.treated))?;
        check_binary(k, "post", Some(r.post))?;
        check_binary(k, "female", r.female)?;
        if let Some(g) = r.subgroup {
            if g >= 8 {
                return Err(Error::InvalidInput(format!("row {k}: subgroup {g} out of 0..8")));
            }
        }
        for (name, v) in [
            ("parental_income", r.parental_income),
            ("parental_education_years", r.parental_education_years),
            ("gpa", r.gpa),
            ("demand_index", r.demand_index),
            ("supply_index", r.supply_index),
        ] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("row {k}: {name} is not finite")));
            }
        }
    }
    Ok(())
}

pub fn read_panel_csv<R: Read>(r: R) -> Result<Vec<PanelRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<PanelRecord>, _>>()?;
    validate_panel(&rows)?;
    Ok(rows)
}

pub fn write_panel_csv<W: Write>(panel: &[PanelRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in panel {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Gender × income above median × education above median.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subgroup {
    pub female: bool,
    pub high_income: bool,
    pub high_education: bool,
}

impl Subgroup {
    pub fn index(&self) -> u8 {
        (self.female as u8) << 2 | (self.high_income as u8) << 1 | self.high_education as u8
    }

    pub fn from_index(g: u8) -> Subgroup {
        Subgroup { female: g & 4 != 0, high_income: g & 2 != 0, high_education: g & 1 != 0 }
    }

    pub fn all() -> impl Iterator<Item = Subgroup> {
        (0..8).map(Subgroup::from_index)
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            if self.female { "female" } else { "male" },
            if self.high_income { "income>p50" } else { "income<=p50" },
            if self.high_education { "educ>p50" } else { "educ<=p50" }
        )
    }
}

/// Restricts an estimation sample; `None` fields are unrestricted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubgroupFilter {
    pub female: Option<bool>,
    pub high_income: Option<bool>,
    pub high_education: Option<bool>,
}

impl SubgroupFilter {
    pub fn exact(g: Subgroup) -> Self {
        Self { female: Some(g.female), high_income: Some(g.high_income), high_education: Some(g.high_education) }
    }

    pub fn matches(&self, g: Subgroup) -> bool {
        self.female.is_none_or(|f| f == g.female)
            && self.high_income.is_none_or(|f| f == g.high_income)
            && self.high_education.is_none_or(|f| f == g.high_education)
    }
}

/// Median of the present values; 0 for an empty input.
pub fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolation quantile (the "type 7" rule), `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Subgroup of each row: the stored cell if present, otherwise a split at the
/// panel medians of income and education (missing values count as low).
pub fn assign_subgroups(panel: &[PanelRecord]) -> Vec<Subgroup> {
    let inc_med = median(panel.iter().filter_map(|r| r.parental_income));
    let edu_med = median(panel.iter().filter_map(|r| r.parental_education_years));
    panel
        .iter()
        .map(|r| match r.subgroup {
            Some(g) => Subgroup::from_index(g),
            None => Subgroup {
                female: r.female == Some(1),
                high_income: r.parental_income.is_some_and(|x| x > inc_med),
                high_education: r.parental_education_years.is_some_and(|x| x > edu_med),
            },
        })
        .collect()
}
