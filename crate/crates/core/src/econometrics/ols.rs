//! Least squares on designs made of a few dense columns plus one-hot
//! fixed-effect blocks, with cluster-robust (CR1) covariance.
//!
//! Cross-products are accumulated row by row from the sparse representation,
//! so the dense `n × k` matrix is never materialized.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Marker for "reference level" in a fixed-effect block.
pub const REFERENCE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct Design {
    /// Dense column names followed by dummy column names, block by block.
    pub names: Vec<String>,
    pub n_dense: usize,
    /// Row-major `n × n_dense`.
    pub dense: Vec<f64>,
    /// Number of dummy columns per block.
    pub block_sizes: Vec<usize>,
    /// Row-major `n × n_blocks`; level index within its block or [`REFERENCE`].
    pub levels: Vec<u32>,
    pub n_rows: usize,
}

impl Design {
    pub fn n_cols(&self) -> usize {
        self.n_dense + self.block_sizes.iter().sum::<usize>()
    }

    fn for_each_entry(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        for (c, &v) in self.dense[i * self.n_dense..(i + 1) * self.n_dense].iter().enumerate() {
            if v != 0.0 {
                f(c, v);
            }
        }
        let nb = self.block_sizes.len();
        let mut offset = self.n_dense;
        for (b, &size) in self.block_sizes.iter().enumerate() {
            let l = self.levels[i * nb + b];
            if l != REFERENCE {
                f(offset + l as usize, 1.0);
            }
            offset += size;
        }
    }

    fn entries(&self, i: usize, buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        self.for_each_entry(i, |c, v| buf.push((c, v)));
    }

    fn predict(&self, i: usize, beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_entry(i, |c, v| acc += v * beta[c]);
        acc
    }

    /// `X' v` for a length-`n` vector.
    pub fn xt_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols()];
        for (i, &vi) in v.iter().enumerate() {
            self.for_each_entry(i, |c, x| out[c] += x * vi);
        }
        out
    }

    /// The dense `n × k` matrix, for tests and small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols());
        for i in 0..self.n_rows {
            self.for_each_entry(i, |c, v| m[(i, c)] = v);
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
}

impl OlsFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.covariance[(j, j)].max(0.0).sqrt()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Relative pivot threshold below which a column is declared collinear with
/// the ones before it.
const PIVOT_TOL: f64 = 1e-10;

/// Cholesky of `X'X` column by column; any column whose pivot vanishes
/// relative to its own sum of squares is reported by name.
fn collinear_columns(xtx: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let k = xtx.nrows();
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut bad = Vec::new();
    let mut kept = vec![false; k];
    for j in 0..k {
        let scale = xtx[(j, j)];
        let mut d = scale;
        for p in 0..j {
            if kept[p] {
                d -= l[(j, p)] * l[(j, p)];
            }
        }
        if !(scale > 0.0) || d <= PIVOT_TOL * scale {
            bad.push(names[j].clone());
            continue;
        }
        kept[j] = true;
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..k {
            let mut s = xtx[(i, j)];
            for p in 0..j {
                if kept[p] {
                    s -= l[(i, p)] * l[(j, p)];
                }
            }
            l[(i, j)] = s / djj;
        }
    }
    bad
}

/// OLS with CR1 cluster-robust covariance:
/// `V = G/(G-1) · (N-1)/(N-K) · (X'X)⁻¹ [Σ_g X_g'e_g e_g'X_g] (X'X)⁻¹`.
pub fn fit_ols(design: &Design, y: &[f64], clusters: &[u32]) -> Result<OlsFit> {
    let n = design.n_rows;
    let k = design.n_cols();
    if y.len() != n || clusters.len() != n {
        return Err(Error::InvalidInput("outcome/cluster length does not match design".into()));
    }
    if n <= k {
        return Err(Error::DegenerateDesign(format!("{n} observations for {k} columns")));
    }
    let cluster_ids: BTreeMap<u32, usize> =
        clusters.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().zip(0..).collect();
    let g = cluster_ids.len();
    if g < 2 {
        return Err(Error::TooFewClusters(g));
    }

    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut buf = Vec::with_capacity(design.n_dense + design.block_sizes.len());
    for i in 0..n {
        design.entries(i, &mut buf);
        for &(a, va) in &buf {
            for &(b, vb) in &buf {
                xtx[(a, b)] += va * vb;
            }
        }
    }
    let bad = collinear_columns(&xtx, &design.names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    let chol = xtx.clone().cholesky().ok_or_else(|| Error::RankDeficient { columns: vec!["<numerical>".into()] })?;

    let mut beta = chol.solve(&DVector::from_vec(design.xt_times(y)));
    // One step of iterative refinement on the normal equations.
    let mut residuals: Vec<f64> = (0..n).map(|i| y[i] - design.predict(i, beta.as_slice())).collect();
    let correction = chol.solve(&DVector::from_vec(design.xt_times(&residuals)));
    beta += correction;
    for (i, r) in residuals.iter_mut().enumerate() {
        *r = y[i] - design.predict(i, beta.as_slice());
    }

    let mut scores = vec![vec![0.0; k]; g];
    for i in 0..n {
        let s = &mut scores[cluster_ids[&clusters[i]]];
        let e = residuals[i];
        design.for_each_entry(i, |c, v| s[c] += v * e);
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for s in &scores {
        let sv = DVector::from_column_slice(s);
        meat += &sv * sv.transpose();
    }
    let bread = chol.inverse();
    let factor = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let v = &bread * meat * &bread * factor;
    let covariance = (&v + v.transpose()) * 0.5;

    Ok(OlsFit {
        names: design.names.clone(),
        coefficients: beta.iter().copied().collect(),
        covariance,
        residuals,
        n_obs: n,
        n_clusters: g,
    })
}
