//! Downstream evaluation of path datasets: parameter estimators for GBM and
//! OU, invalid-path filtering and marginal comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path_sim::PathDataset;

/// Quantile levels reported for every marginal.
pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

fn require_1d(ds: &PathDataset) -> Result<()> {
    if ds.dim != 1 {
        return Err(Error::Shape(format!("expected a one-dimensional dataset, got d = {}", ds.dim)));
    }
    Ok(())
}

/// Drops paths with any value `<= 0` (or non-finite); returns the kept
/// paths and the number removed.
pub fn filter_invalid_gbm(ds: &PathDataset) -> Result<(PathDataset, usize)> {
    require_1d(ds)?;
    let keep: Vec<usize> = (0..ds.n_paths).filter(|&p| ds.path(p).iter().all(|&v| v > 0.0 && v.is_finite())).collect();
    let removed = ds.n_paths - keep.len();
    Ok((ds.subset(&keep), removed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmEstimate {
    pub mu: f64,
    pub sigma: f64,
}

/// Pooled log-return moments: `sigma = sqrt(Var(r) / dt)`, `mu = mean(r) / dt + sigma^2 / 2`.
pub fn estimate_gbm(ds: &PathDataset) -> Result<GbmEstimate> {
    require_1d(ds)?;
    if ds.grid.n_steps == 0 || ds.n_paths == 0 {
        return Err(Error::Data("need at least one path with two grid points".into()));
    }
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for p in 0..ds.n_paths {
        for w in ds.path(p).windows(2) {
            if !(w[0] > 0.0 && w[1] > 0.0) {
                return Err(Error::EstimationDomain(format!("path {p} has a non-positive value")));
            }
            let r = (w[1] / w[0]).ln();
            n += 1;
            let delta = r - mean;
            mean += delta / n as f64;
            m2 += delta * (r - mean);
        }
    }
    let dt = ds.grid.dt;
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    let sigma = (var / dt).sqrt();
    Ok(GbmEstimate { mu: mean / dt + sigma * sigma / 2.0, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuEstimate {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
}

/// Least squares `X_{t+dt} = alpha + beta X_t + e` over all consecutive pairs
/// of all paths, mapped to `kappa = -ln(beta) / dt`, `theta = alpha / (1 - beta)`,
/// `sigma = s sqrt(2 kappa / (1 - beta^2))`.
pub fn estimate_ou(ds: &PathDataset) -> Result<OuEstimate> {
    require_1d(ds)?;
    let n = ds.n_paths * ds.grid.n_steps;
    if n < 3 {
        return Err(Error::Data("need at least three consecutive pairs".into()));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in 0..ds.n_paths {
        for w in ds.path(p).windows(2) {
            sx += w[0];
            sy += w[1];
        }
    }
    let nf = n as f64;
    let (mx, my) = (sx / nf, sy / nf);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in 0..ds.n_paths {
        for w in ds.path(p).windows(2) {
            sxx += (w[0] - mx) * (w[0] - mx);
            sxy += (w[0] - mx) * (w[1] - my);
        }
    }
    if !(sxx > 0.0) {
        return Err(Error::EstimationDomain("regressor has no variance".into()));
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::EstimationDomain(format!("regression slope {beta} outside (0, 1)")));
    }
    let mut sse = 0.0;
    for p in 0..ds.n_paths {
        for w in ds.path(p).windows(2) {
            sse += (w[1] - alpha - beta * w[0]).powi(2);
        }
    }
    let s = (sse / (nf - 2.0)).sqrt();
    let kappa = -beta.ln() / ds.grid.dt;
    Ok(OuEstimate { kappa, theta: alpha / (1.0 - beta), sigma: s * (2.0 * kappa).sqrt() / (1.0 - beta * beta).sqrt() })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic 1% critical value of the two-sample statistic.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var)
}

/// Shared-bin histogram of two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts_a: Vec<usize>,
    pub counts_b: Vec<usize>,
}

/// Freedman–Diaconis bins on the union sample (width `2 IQR n^(-1/3)`).
pub fn shared_histogram(a: &[f64], b: &[f64]) -> Result<Histogram> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("empty sample".into()));
    }
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let (lo, hi) = (all[0], all[all.len() - 1]);
    let iqr = quantile(&all, 0.75) - quantile(&all, 0.25);
    let width = 2.0 * iqr / (all.len() as f64).cbrt();
    let bins = if width > 0.0 && hi > lo { (((hi - lo) / width).ceil() as usize).clamp(1, 1000) } else { 1 };
    let step = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * step).collect();
    let count = |v: &[f64]| {
        let mut c = vec![0; bins];
        for &x in v {
            let i = (((x - lo) / step) as usize).min(bins - 1);
            c[i] += 1;
        }
        c
    };
    Ok(Histogram { edges, counts_a: count(a), counts_b: count(b) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    pub time: f64,
    pub coord: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub mean_delta: f64,
    pub var_delta: f64,
    pub quantiles_a: Vec<f64>,
    pub quantiles_b: Vec<f64>,
    pub ks: f64,
    pub ks_critical_1pct: f64,
    pub histogram: Histogram,
}

/// Distribution of coordinate `coord` of `a` and `b` at each of `times`.
pub fn compare_marginals(a: &PathDataset, b: &PathDataset, times: &[f64], coord: usize) -> Result<Vec<MarginalComparison>> {
    if a.n_paths == 0 || b.n_paths == 0 {
        return Err(Error::Data("cannot compare empty datasets".into()));
    }
    if coord >= a.dim || coord >= b.dim {
        return Err(Error::Shape(format!("coordinate {coord} out of range")));
    }
    times
        .iter()
        .map(|&t| {
            let ka = a.grid.index_of(t).ok_or_else(|| Error::Data(format!("time {t} is not on the first grid")))?;
            let kb = b.grid.index_of(t).ok_or_else(|| Error::Data(format!("time {t} is not on the second grid")))?;
            let mut va = a.marginal(ka, coord);
            let mut vb = b.marginal(kb, coord);
            va.sort_by(f64::total_cmp);
            vb.sort_by(f64::total_cmp);
            let (mean_a, var_a) = mean_var(&va);
            let (mean_b, var_b) = mean_var(&vb);
            Ok(MarginalComparison {
                time: t,
                coord,
                n_a: va.len(),
                n_b: vb.len(),
                mean_a,
                mean_b,
                var_a,
                var_b,
                mean_delta: mean_b - mean_a,
                var_delta: var_b - var_a,
                quantiles_a: QUANTILES.iter().map(|&q| quantile(&va, q)).collect(),
                quantiles_b: QUANTILES.iter().map(|&q| quantile(&vb, q)).collect(),
                ks: ks_statistic(&va, &vb)?,
                ks_critical_1pct: ks_critical_1pct(va.len(), vb.len()),
                histogram: shared_histogram(&va, &vb)?,
            })
        })
        .collect()
}

/// Estimates and comparisons for a set of named datasets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Dataset name to estimated parameters.
    pub parameters: BTreeMap<String, BTreeMap<String, f64>>,
    pub invalid: BTreeMap<String, usize>,
    pub valid: BTreeMap<String, usize>,
    /// Marginals of each dataset against the reference dataset.
    pub marginals: BTreeMap<String, Vec<MarginalComparison>>,
    /// Datasets whose parameters could not be estimated, with the reason.
    #[serde(default)]
    pub failed: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `name,param,value` rows.
    pub fn parameters_csv(&self) -> String {
        let mut out = String::from("dataset,parameter,value,invalid,valid\n");
        for (name, params) in &self.parameters {
            for (k, v) in params {
                let inv = self.invalid.get(name).copied().unwrap_or(0);
                let val = self.valid.get(name).copied().unwrap_or(0);
                writeln!(out, "{name},{k},{v:.10},{inv},{val}").expect("string write");
            }
        }
        out
    }

    pub fn marginals_csv(&self) -> String {
        let mut out = String::from("dataset,time,coord,mean_ref,mean,var_ref,var,ks,ks_critical_1pct\n");
        for (name, rows) in &self.marginals {
            for m in rows {
                writeln!(
                    out,
                    "{name},{},{},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10}",
                    m.time, m.coord, m.mean_a, m.mean_b, m.var_a, m.var_b, m.ks, m.ks_critical_1pct
                )
                .expect("string write");
            }
        }
        out
    }

    pub fn histograms_csv(&self) -> String {
        let mut out = String::from("dataset,time,coord,bin_lo,bin_hi,count_ref,count\n");
        for (name, rows) in &self.marginals {
            for m in rows {
                let h = &m.histogram;
                for i in 0..h.counts_a.len() {
                    writeln!(out, "{name},{},{},{:.10},{:.10},{},{}", m.time, m.coord, h.edges[i], h.edges[i + 1], h.counts_a[i], h.counts_b[i])
                        .expect("string write");
                }
            }
        }
        out
    }

    /// `report.json`, `parameters.csv`, `marginals.csv` and `histograms.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        fs::write(dir.join("parameters.csv"), self.parameters_csv())?;
        fs::write(dir.join("marginals.csv"), self.marginals_csv())?;
        fs::write(dir.join("histograms.csv"), self.histograms_csv())?;
        Ok(())
    }
}

/// Which parameter estimator applies to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Gbm,
    Ou,
}

/// Filters (GBM only), estimates and compares `datasets` against `reference`.
pub fn evaluate(model: Model, reference: (&str, &PathDataset), datasets: &[(&str, &PathDataset)], times: &[f64]) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for &(name, ds) in std::iter::once(&reference).chain(datasets) {
        let (kept, invalid) = match model {
            Model::Gbm => filter_invalid_gbm(ds)?,
            Model::Ou => (ds.clone(), 0),
        };
        let params = match model {
            Model::Gbm => estimate_gbm(&kept).map(|e| BTreeMap::from([("mu".to_string(), e.mu), ("sigma".to_string(), e.sigma)])),
            Model::Ou => estimate_ou(&kept).map(|e| {
                BTreeMap::from([("kappa".to_string(), e.kappa), ("theta".to_string(), e.theta), ("sigma".to_string(), e.sigma)])
            }),
        };
        match params {
            Ok(p) => {
                report.parameters.insert(name.to_string(), p);
            }
            // a degenerate generated dataset is a finding, not a failure of the evaluation
            Err(e @ (Error::Data(_) | Error::EstimationDomain(_))) if name != reference.0 => {
                report.failed.insert(name.to_string(), e.to_string());
            }
            Err(e) => return Err(e),
        }
        report.invalid.insert(name.to_string(), invalid);
        report.valid.insert(name.to_string(), kept.n_paths);
        if name != reference.0 && !times.is_empty() && kept.n_paths > 0 {
            report.marginals.insert(name.to_string(), compare_marginals(reference.1, &kept, times, 0)?);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_sim::Grid;

    fn dataset(values: Vec<f64>, dt: f64) -> PathDataset {
        let n_steps = (1.0 / dt).round() as usize;
        PathDataset::from_values(Grid::new(1.0, dt).unwrap(), 1, values, 0).unwrap_or_else(|_| panic!("{n_steps}"))
    }

    #[test]
    fn exponential_paths() {
        let dt = 0.01;
        let vals: Vec<f64> = (0..3).flat_map(|p| (0..=100).map(move |k| (1.0 + p as f64) * (2.0 * k as f64 * dt).exp())).collect();
        let e = estimate_gbm(&dataset(vals, dt)).unwrap();
        assert!((e.mu - 2.0).abs() < 1e-10 && e.sigma < 1e-6, "{e:?}");
    }

    #[test]
    fn degenerate_dataset_is_reported_not_fatal() {
        let good: Vec<f64> = (0..2).flat_map(|_| (0..=100).map(|k| (0.01 * k as f64).exp())).collect();
        let bad = vec![-1.0; 2 * 101];
        let (g, b) = (dataset(good, 0.01), dataset(bad, 0.01));
        let r = evaluate(Model::Gbm, ("reference", &g), &[("bad", &b)], &[1.0]).unwrap();
        assert_eq!(r.invalid["bad"], 2);
        assert!(r.failed.contains_key("bad") && !r.parameters.contains_key("bad"));
        assert!(evaluate(Model::Gbm, ("reference", &b), &[], &[]).is_err());
    }

    #[test]
    fn filtering() {
        let mut vals = vec![1.0; 3 * 101];
        let (kept, n) = filter_invalid_gbm(&dataset(vals.clone(), 0.01)).unwrap();
        assert_eq!((kept.n_paths, n), (3, 0));
        vals[101 + 50] = 0.0;
        let (kept, n) = filter_invalid_gbm(&dataset(vals, 0.01)).unwrap();
        assert_eq!((kept.n_paths, n), (2, 1));
    }

    #[test]
    fn noiseless_ou() {
        let (kappa, theta, dt) = (2.0f64, 3.0, 0.01);
        let b = (-kappa * dt).exp();
        let vals: Vec<f64> = [0.0, 1.0, 5.0]
            .iter()
            .flat_map(|&x0| {
                let mut x = x0;
                (0..=100).map(move |k| {
                    if k > 0 {
                        x = x * b + theta * (1.0 - b);
                    }
                    x
                })
            })
            .collect();
        let e = estimate_ou(&dataset(vals, dt)).unwrap();
        assert!((e.kappa - 2.0).abs() < 1e-10 && (e.theta - 3.0).abs() < 1e-10 && e.sigma < 1e-6, "{e:?}");
    }

    #[test]
    fn ou_slope_out_of_domain() {
        let vals: Vec<f64> = (0..2).flat_map(|p| (0..=100).map(move |k| (p + k) as f64)).collect();
        assert!(matches!(estimate_ou(&dataset(vals, 0.01)), Err(Error::EstimationDomain(_))));
    }

    #[test]
    fn ks_extremes() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0; 5], &[1.0; 7]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[1.0, 1.0]).unwrap(), 0.5);
        assert!(ks_statistic(&[], &[1.0]).is_err());
    }

    #[test]
    fn self_comparison_is_zero() {
        let vals: Vec<f64> = (0..50).flat_map(|p| (0..=100).map(move |k| 1.0 + 0.01 * (p * k % 17) as f64)).collect();
        let ds = dataset(vals, 0.01);
        let r = compare_marginals(&ds, &ds, &[0.5, 1.0], 0).unwrap();
        for m in r {
            assert_eq!((m.ks, m.mean_delta, m.var_delta), (0.0, 0.0, 0.0));
            assert_eq!(m.histogram.counts_a, m.histogram.counts_b);
            assert_eq!(m.histogram.counts_a.iter().sum::<usize>(), 50);
        }
    }
}
