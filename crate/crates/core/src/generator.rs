//! Generative Euler scheme driven by estimated coefficients.
//!
//! From a start time `t_bar` every path repeats: estimate `(mu_hat)_K` and
//! `(Sigma_hat)_K` from the history so far, take a square root `R`, step
//! `X <- X + mu_hat delta + R sqrt(delta) eps`, and append the new point as a
//! complete observation.

use std::fs;
use std::path::Path;

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_baseline, estimate_instant, psd_sqrt, truncate, CoefficientEstimate};
use crate::losses::Scheme;
use crate::nn::Mat;
use crate::njode::{condition_rows, LatentBatch, NjodeParams};
use crate::path_sim::io::write_dataset;
use crate::path_sim::{Grid, ObservationSequence, PathDataset};
use crate::rng::{self, Domain};
use crate::trainer::{CoefficientModel, TrainedModel};

/// Known coefficients, used in place of a learned model.
pub trait CoefficientOracle: Sync {
    fn dim(&self) -> usize;

    /// Writes `mu` (`d`) and `Sigma` (`d x d`, row-major) at time `t`.
    /// `path` holds the generated values so far, the current state last.
    fn coefficients(&self, t: f64, path: &[f64], mu: &mut [f64], sigma: &mut [f64]);
}

/// `mu(x) = mu x`, `Sigma(x) = sigma^2 x^2` (one dimension).
#[derive(Debug, Clone, Copy)]
pub struct GbmOracle {
    pub mu: f64,
    pub sigma: f64,
}

impl CoefficientOracle for GbmOracle {
    fn dim(&self) -> usize {
        1
    }

    fn coefficients(&self, _t: f64, path: &[f64], mu: &mut [f64], sigma: &mut [f64]) {
        let x = path[path.len() - 1];
        mu[0] = self.mu * x;
        sigma[0] = self.sigma * self.sigma * x * x;
    }
}

/// `mu(x) = kappa (theta - x)`, `Sigma = sigma^2`.
#[derive(Debug, Clone, Copy)]
pub struct OuOracle {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
}

impl CoefficientOracle for OuOracle {
    fn dim(&self) -> usize {
        1
    }

    fn coefficients(&self, _t: f64, path: &[f64], mu: &mut [f64], sigma: &mut [f64]) {
        let x = path[path.len() - 1];
        mu[0] = self.kappa * (self.theta - x);
        sigma[0] = self.sigma * self.sigma;
    }
}

/// State-independent coefficients.
#[derive(Debug, Clone)]
pub struct ConstantOracle {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl CoefficientOracle for ConstantOracle {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn coefficients(&self, _t: f64, _path: &[f64], mu: &mut [f64], sigma: &mut [f64]) {
        mu.copy_from_slice(&self.mu);
        sigma.copy_from_slice(&self.sigma);
    }
}

/// Source of the coefficient estimates.
#[derive(Clone, Copy)]
pub enum Estimator<'a> {
    Model(&'a TrainedModel),
    Oracle(&'a dyn CoefficientOracle),
}

impl Estimator<'_> {
    fn dim(&self) -> usize {
        match self {
            Estimator::Model(m) => m.model.dim(),
            Estimator::Oracle(o) => o.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Euler step `delta`, a multiple of the history grid step.
    pub delta: f64,
    /// Truncation level `K`; models default to their recorded level.
    pub truncation_level: Option<f64>,
    /// Generation start `t_bar`; between observations the run starts at the
    /// last observation time before it.
    pub start: f64,
    /// Last generated time; defaults to the history horizon.
    pub horizon: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    /// Paths advanced together through the model.
    pub batch_size: usize,
    /// Keep the applied coefficients of every step.
    pub record_coefficients: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            delta: 0.01,
            truncation_level: None,
            start: 0.0,
            horizon: None,
            n_paths: 5000,
            seed: 0,
            batch_size: 500,
            record_coefficients: false,
        }
    }
}

/// Coefficients applied in one Euler step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub x: Vec<f64>,
    pub estimate: CoefficientEstimate,
}

/// `gen_meta.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub delta: f64,
    pub truncation_level: f64,
    pub scheme: Option<Scheme>,
    pub model_checksum: Option<String>,
    pub seed: u64,
    pub start: f64,
    pub n_requested: usize,
    pub n_generated: usize,
    pub n_diverged: usize,
}

#[derive(Debug, Clone)]
pub struct GenerationRun {
    /// Finite paths on the `delta` grid; values before `t_bar` repeat the
    /// last observed history value.
    pub dataset: PathDataset,
    /// Requested path index of every kept path.
    pub path_ids: Vec<usize>,
    /// Paths dropped for non-finite values.
    pub diverged: usize,
    pub meta: GenerationMeta,
    /// Per kept path, one record per step (when requested).
    pub coefficients: Option<Vec<Vec<StepRecord>>>,
}

impl GenerationRun {
    /// Dataset files plus `gen_meta.json` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_dataset(dir, &self.dataset, None, None)?;
        fs::write(dir.join("gen_meta.json"), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }
}

/// Generates paths from the initial value `x0` at `t = 0` on `grid`.
pub fn generate(est: Estimator<'_>, grid: Grid, x0: &[f64], config: &GenerationConfig) -> Result<GenerationRun> {
    let history = ObservationSequence::new(grid, x0);
    generate_from(est, &history, config)
}

/// Continuations of one history: all paths share the observations up to
/// `start` and use independent noise afterwards.
pub fn generate_continuations(
    est: Estimator<'_>,
    history: &ObservationSequence,
    start: f64,
    n_paths: usize,
    delta: f64,
    truncation_level: Option<f64>,
    seed: u64,
) -> Result<GenerationRun> {
    let config = GenerationConfig { delta, truncation_level, start, n_paths, seed, ..GenerationConfig::default() };
    generate_from(est, history, &config)
}

struct Plan {
    grid: Grid,
    /// History grid steps per Euler step.
    stride: usize,
    start_index: usize,
    end_index: usize,
    k: f64,
    out_grid: Grid,
}

fn plan(est: &Estimator<'_>, history: &ObservationSequence, config: &GenerationConfig) -> Result<Plan> {
    history.validate()?;
    if history.dim != est.dim() {
        return Err(Error::Shape(format!("history has dimension {}, estimator {}", history.dim, est.dim())));
    }
    let grid = history.grid;
    if !(config.delta > 0.0) {
        return Err(Error::config("generation.delta", "must be positive"));
    }
    let ratio = config.delta / grid.dt;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::config("generation.delta", format!("must be a multiple of the grid step {}", grid.dt)));
    }
    let stride = ratio.round() as usize;
    let requested = grid
        .index_of(config.start)
        .ok_or_else(|| Error::config("generation.start", "must lie on the history grid"))?;
    // between observations the run starts at the last observation time
    let start_index = history.indices[history.kappa_index(requested) - 1];
    if start_index % stride != 0 {
        return Err(Error::config("generation.start", "the last observation before the start must lie on the delta grid"));
    }
    let horizon = config.horizon.unwrap_or(grid.horizon());
    let end_index = grid
        .index_of(horizon)
        .filter(|&i| i >= start_index && i % stride == 0)
        .ok_or_else(|| Error::config("generation.horizon", "must be a multiple of delta between start and the grid horizon"))?;
    let k = match (config.truncation_level, est) {
        (Some(k), _) => k,
        (None, Estimator::Model(m)) => m.truncation_level,
        (None, Estimator::Oracle(_)) => return Err(Error::config("generation.truncation_level", "required for oracle coefficients")),
    };
    if !(k > 0.0) {
        return Err(Error::config("generation.truncation_level", "must be positive"));
    }
    if config.n_paths == 0 || config.batch_size == 0 {
        return Err(Error::config("generation.n_paths", "paths and batch size must be positive"));
    }
    if let Estimator::Model(m) = est {
        m.model.check_scheme(m.scheme)?;
    }
    let out_grid = Grid::new(grid.time(end_index), config.delta)?;
    Ok(Plan { grid, stride, start_index, end_index, k, out_grid })
}

pub fn generate_from(est: Estimator<'_>, history: &ObservationSequence, config: &GenerationConfig) -> Result<GenerationRun> {
    let plan = plan(&est, history, config)?;
    let d = history.dim;
    let batches: Vec<(usize, usize)> =
        (0..config.n_paths).step_by(config.batch_size).map(|s| (s, (s + config.batch_size).min(config.n_paths))).collect();
    let results = batches
        .par_iter()
        .map(|&(lo, hi)| run_batch(&est, history, &plan, config, lo..hi))
        .collect::<Result<Vec<_>>>()?;

    // values before t_bar: last observed history value on the delta grid
    let n_out = plan.out_grid.len();
    let n_prefix = plan.start_index / plan.stride;
    let mut prefix = Vec::with_capacity(n_prefix * d);
    for m in 0..n_prefix {
        let idx = m * plan.stride;
        prefix.extend(history.last_observed(history.kappa_index(idx) - 1));
    }

    let mut values = Vec::new();
    let mut path_ids = Vec::new();
    let mut records = config.record_coefficients.then(Vec::new);
    let mut diverged = 0;
    for batch in results {
        for (id, path, recs) in batch {
            match path {
                Some(p) => {
                    values.extend_from_slice(&prefix);
                    values.extend(p);
                    path_ids.push(id);
                    if let Some(r) = records.as_mut() {
                        r.push(recs);
                    }
                }
                None => diverged += 1,
            }
        }
    }
    let mut dataset = PathDataset::from_values(plan.out_grid, d, values, config.seed)?;
    debug_assert_eq!(dataset.grid.len(), n_out);
    dataset.spec = None;
    let (scheme, checksum) = match est {
        Estimator::Model(m) => (Some(m.scheme), Some(m.model.checksum())),
        Estimator::Oracle(_) => (None, None),
    };
    let meta = GenerationMeta {
        delta: config.delta,
        truncation_level: plan.k,
        scheme,
        model_checksum: checksum,
        seed: config.seed,
        start: plan.grid.time(plan.start_index),
        n_requested: config.n_paths,
        n_generated: path_ids.len(),
        n_diverged: diverged,
    };
    Ok(GenerationRun { dataset, path_ids, diverged, meta, coefficients: records })
}

type PathOut = (usize, Option<Vec<f64>>, Vec<StepRecord>);

/// Latent states of the model network(s) for a batch of paths.
struct ModelDriver<'a> {
    trained: &'a TrainedModel,
    states: Vec<LatentBatch<'a>>,
}

impl<'a> ModelDriver<'a> {
    fn start(trained: &'a TrainedModel, history: &ObservationSequence, cond_index: usize, at: usize, rows: usize) -> Result<Self> {
        let mut states = Vec::new();
        for net in trained.model.nets() {
            let mut b: LatentBatch<'a> = condition_rows(net as &'a NjodeParams, history, cond_index, rows)?;
            b.evolve_to(at)?;
            states.push(b);
        }
        Ok(ModelDriver { trained, states })
    }

    /// `(G1, G2)` at the current time, `B x d` and `B x d^2`.
    fn outputs(&mut self, d: usize) -> Result<(Mat, Mat)> {
        Ok(match &self.trained.model {
            CoefficientModel::Joint(_) => {
                let o = self.states[0].readout()?;
                (o.slice(s![.., ..d]).to_owned(), o.slice(s![.., d..d + d * d]).to_owned())
            }
            CoefficientModel::Separate { .. } => (self.states[0].readout()?, self.states[1].readout()?),
        })
    }

    fn evolve_to(&mut self, index: usize) -> Result<()> {
        self.states.iter_mut().try_for_each(|s| s.evolve_to(index))
    }

    fn jump(&mut self, x: &Mat) -> Result<()> {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let mask = Array2::ones(x.dim());
        self.states.iter_mut().try_for_each(|s| s.jump(&rows, x, &mask))
    }
}

fn run_batch(
    est: &Estimator<'_>,
    history: &ObservationSequence,
    plan: &Plan,
    config: &GenerationConfig,
    ids: std::ops::Range<usize>,
) -> Result<Vec<PathOut>> {
    let d = history.dim;
    let b = ids.len();
    let delta = config.delta;
    let sqrt_delta = delta.sqrt();
    let t_bar = plan.start_index;

    // the history point at t_bar, if any
    let n_cond = history.kappa_index(t_bar);
    let at_start = (n_cond > 0 && history.indices[n_cond - 1] == t_bar).then(|| n_cond - 1);
    let complete = at_start.is_some_and(|k| history.is_complete(k));
    let cond_index = if complete || t_bar == 0 { t_bar } else { t_bar - 1 };

    let mut driver = match est {
        Estimator::Model(m) => Some(ModelDriver::start(m, history, cond_index, t_bar, b)?),
        Estimator::Oracle(_) => None,
    };

    // starting value
    let last = history.last_observed(history.kappa_index(cond_index) - 1);
    let mut start = last.clone();
    if !complete {
        if let (Some(drv), Estimator::Model(m)) = (driver.as_mut(), est) {
            let (g1, _) = drv.outputs(d)?;
            let elapsed: Vec<f64> = drv.states[0].tau().iter().map(|tau| plan.grid.time(t_bar) - tau).collect();
            for c in 0..d {
                start[c] = if m.scheme.is_instant() { last[c] + elapsed[0] * g1[[0, c]] } else { g1[[0, c]] };
            }
        }
        if let Some(k) = at_start {
            for c in 0..d {
                if history.mask(k)[c] {
                    start[c] = history.value(k)[c];
                }
            }
        }
    }
    let mut x = Array2::from_shape_fn((b, d), |(_, c)| start[c]);
    if let Some(drv) = driver.as_mut() {
        if !complete {
            drv.jump(&x)?;
        }
    }

    let mut rngs: Vec<ChaCha8Rng> = ids.clone().map(|i| rng::stream(config.seed, Domain::Generation, i as u64)).collect();
    let n_steps = (plan.end_index - t_bar) / plan.stride;
    let mut paths: Vec<Vec<f64>> = (0..b).map(|_| Vec::with_capacity((n_steps + 1) * d)).collect();
    for (r, p) in paths.iter_mut().enumerate() {
        p.extend(x.row(r).iter());
    }
    let mut alive = vec![true; b];
    let mut records: Vec<Vec<StepRecord>> = vec![Vec::new(); b];
    let mut mu = vec![0.0; d];
    let mut sig = vec![0.0; d * d];
    let mut eps = vec![0.0; d];

    for m in 0..n_steps {
        let i = t_bar + m * plan.stride;
        let next = i + plan.stride;
        let t = plan.grid.time(i);
        let outputs = match (driver.as_mut(), est) {
            (Some(drv), Estimator::Model(model)) if model.scheme.is_instant() => {
                let o = drv.outputs(d)?;
                drv.evolve_to(next)?;
                Some(o)
            }
            (Some(drv), _) => {
                drv.evolve_to(next)?;
                Some(drv.outputs(d)?)
            }
            _ => None,
        };
        for r in 0..b {
            if !alive[r] {
                continue;
            }
            let xr: Vec<f64> = x.row(r).to_vec();
            let estimate = match (&outputs, est) {
                (Some((g1, g2)), Estimator::Model(model)) => {
                    let (g1r, g2r) = (g1.row(r).to_vec(), g2.row(r).to_vec());
                    if model.scheme.is_instant() {
                        estimate_instant(&g1r, &g2r, plan.k)
                    } else {
                        estimate_baseline(&xr, &g1r, &g2r, delta, plan.k)
                    }
                }
                (_, Estimator::Oracle(o)) => {
                    o.coefficients(t, &paths[r], &mut mu, &mut sig);
                    oracle_estimate(&mu, &sig, plan.k)
                }
                (None, Estimator::Model(_)) => unreachable!("model runs carry a driver"),
            };
            let estimate = match estimate {
                Ok(e) => e,
                Err(Error::EstimationDomain(_)) => {
                    alive[r] = false;
                    continue;
                }
                Err(e) => return Err(e),
            };
            for e in eps.iter_mut() {
                *e = rng::normal(&mut rngs[r]);
            }
            let mut ok = true;
            for a in 0..d {
                let noise: f64 = (0..d).map(|c| estimate.sqrt_sigma[a * d + c] * eps[c]).sum();
                let v = xr[a] + estimate.mu_hat[a] * delta + noise * sqrt_delta;
                ok &= v.is_finite();
                x[[r, a]] = if v.is_finite() { v } else { xr[a] };
            }
            if config.record_coefficients {
                records[r].push(StepRecord { time: t, x: xr, estimate });
            }
            if ok {
                paths[r].extend(x.row(r).iter());
            } else {
                alive[r] = false;
            }
        }
        if let Some(drv) = driver.as_mut() {
            drv.jump(&x)?;
        }
    }
    Ok(ids
        .zip(paths)
        .zip(alive)
        .zip(records)
        .map(|(((id, p), ok), rec)| (id, ok.then_some(p), rec))
        .collect())
}

fn oracle_estimate(mu: &[f64], sigma: &[f64], k: f64) -> Result<CoefficientEstimate> {
    let d = mu.len();
    let (root, clamped) = psd_sqrt(sigma, d)?;
    truncate(
        CoefficientEstimate {
            mu_hat: mu.to_vec(),
            sigma_hat: sigma.to_vec(),
            sqrt_sigma: root,
            truncation_level: f64::INFINITY,
            truncated_mu: false,
            truncated_sigma: false,
            clamped_eigenvalues: clamped,
            factor_sqrt: false,
        },
        k,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(1.0, 0.01).unwrap()
    }

    #[test]
    fn zero_coefficients_keep_paths_constant() {
        let oracle = ConstantOracle { mu: vec![0.0], sigma: vec![0.0] };
        let cfg = GenerationConfig { n_paths: 7, truncation_level: Some(10.0), ..GenerationConfig::default() };
        let run = generate(Estimator::Oracle(&oracle), grid(), &[1.5], &cfg).unwrap();
        assert_eq!(run.dataset.n_paths, 7);
        assert!(run.dataset.values.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn arithmetic_brownian_marginals() {
        let oracle = ConstantOracle { mu: vec![0.5], sigma: vec![0.04] };
        let cfg = GenerationConfig { n_paths: 4000, truncation_level: Some(10.0), seed: 3, ..GenerationConfig::default() };
        let run = generate(Estimator::Oracle(&oracle), grid(), &[1.0], &cfg).unwrap();
        let end = run.dataset.marginal(100, 0);
        let n = end.len() as f64;
        let mean = end.iter().sum::<f64>() / n;
        let var = end.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // X_1 ~ N(1.5, 0.04)
        assert!((mean - 1.5).abs() < 4.0 * (0.04 / n).sqrt(), "{mean}");
        assert!((var - 0.04).abs() < 4.0 * 0.04 * (2.0 / n).sqrt(), "{var}");
    }

    #[test]
    fn truncation_bounds_applied_coefficients() {
        let oracle = ConstantOracle { mu: vec![50.0], sigma: vec![400.0] };
        let cfg = GenerationConfig { n_paths: 3, truncation_level: Some(2.0), record_coefficients: true, ..GenerationConfig::default() };
        let run = generate(Estimator::Oracle(&oracle), grid(), &[0.0], &cfg).unwrap();
        for rec in run.coefficients.unwrap().iter().flatten() {
            assert!(rec.estimate.mu_hat[0] <= 2.0 && rec.estimate.sigma_hat[0] <= 2.0);
            assert!(rec.estimate.truncated_mu && rec.estimate.truncated_sigma);
        }
    }

    #[test]
    fn paths_do_not_depend_on_batching() {
        let oracle = GbmOracle { mu: 2.0, sigma: 0.3 };
        let a = GenerationConfig { n_paths: 10, truncation_level: Some(100.0), seed: 1, batch_size: 3, ..GenerationConfig::default() };
        let b = GenerationConfig { batch_size: 10, ..a.clone() };
        let ra = generate(Estimator::Oracle(&oracle), grid(), &[1.0], &a).unwrap();
        let rb = generate(Estimator::Oracle(&oracle), grid(), &[1.0], &b).unwrap();
        assert_eq!(ra.dataset.values, rb.dataset.values);
        let c = GenerationConfig { n_paths: 4, ..a };
        let rc = generate(Estimator::Oracle(&oracle), grid(), &[1.0], &c).unwrap();
        assert_eq!(rc.dataset.path(3), ra.dataset.path(3));
    }

    #[test]
    fn continuations_share_the_history() {
        let g = grid();
        let mut h = ObservationSequence::new(g, &[1.0]);
        h.push(20, &[1.3], &[true]).unwrap();
        h.push(50, &[2.0], &[true]).unwrap();
        let oracle = GbmOracle { mu: 2.0, sigma: 0.3 };
        let run = generate_continuations(Estimator::Oracle(&oracle), &h, 0.5, 5, 0.01, Some(100.0), 4).unwrap();
        for p in 0..5 {
            assert_eq!(run.dataset.value(p, 0), &[1.0]);
            assert_eq!(run.dataset.value(p, 30), &[1.3]);
            assert_eq!(run.dataset.value(p, 50), &[2.0]);
        }
        assert_ne!(run.dataset.value(0, 51), run.dataset.value(1, 51));
        let later = generate_continuations(Estimator::Oracle(&oracle), &h, 0.6, 5, 0.01, Some(100.0), 4).unwrap();
        assert_eq!(later.meta.start, 0.5);
        assert_eq!(later.dataset, run.dataset);
        let quiet = ConstantOracle { mu: vec![1.0], sigma: vec![0.0] };
        let run = generate_continuations(Estimator::Oracle(&quiet), &h, 0.5, 1, 0.05, Some(100.0), 4).unwrap();
        assert_eq!(run.dataset.grid.len(), 21);
        assert!((run.dataset.value(0, 20)[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let oracle = GbmOracle { mu: 2.0, sigma: 0.3 };
        let bad = [
            GenerationConfig { delta: 0.015, truncation_level: Some(1.0), ..GenerationConfig::default() },
            GenerationConfig { truncation_level: None, ..GenerationConfig::default() },
            GenerationConfig { truncation_level: Some(1.0), start: 0.005, ..GenerationConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate(Estimator::Oracle(&oracle), grid(), &[1.0], &cfg), Err(Error::Config { .. })));
        }
    }

    #[test]
    fn model_generation_runs_for_every_scheme() {
        use crate::trainer::ModelConfig;
        let cfg = ModelConfig { latent_dim: 6, hidden_width: 5, ..ModelConfig::default() };
        for scheme in Scheme::ALL {
            let model = CoefficientModel::init(scheme, 1, &cfg, 2).unwrap();
            let trained = TrainedModel { scheme, model, seed: 2, step: 0, best_epoch: vec![], truncation_level: 5.0 };
            let gen = GenerationConfig { n_paths: 6, batch_size: 4, ..GenerationConfig::default() };
            let run = generate(Estimator::Model(&trained), grid(), &[1.0], &gen).unwrap();
            assert_eq!(run.dataset.n_paths + run.diverged, 6);
            assert_eq!(run.meta.scheme, Some(scheme));
            let again = generate(Estimator::Model(&trained), grid(), &[1.0], &gen).unwrap();
            assert_eq!(run.dataset.values, again.dataset.values);
        }
    }
}
