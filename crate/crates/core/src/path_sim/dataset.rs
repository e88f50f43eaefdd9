use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sde::{Sde, SdeSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Regular time grid `0, dt, ..., n_steps * dt`. Times are always derived
/// from integer indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dt: f64,
    pub n_steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config("dt", "must be positive"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::config("T", "must be positive"));
        }
        let n = (horizon / dt).round();
        if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) || n < 1.0 {
            return Err(Error::config("dt", format!("T = {horizon} is not a multiple of dt = {dt}")));
        }
        Ok(Grid { dt, n_steps: n as usize })
    }

    #[inline]
    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid index of `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize > self.n_steps || (k * self.dt - t).abs() > 1e-9 * self.dt.max(1.0) {
            None
        } else {
            Some(k as usize)
        }
    }
}

/// A batch of sample paths on a shared regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDataset {
    pub grid: Grid,
    pub dim: usize,
    pub n_paths: usize,
    /// Row-major `[n_paths][n_steps + 1][dim]`.
    pub values: Vec<f64>,
    pub seed: u64,
    pub spec: Option<SdeSpec>,
}

impl PathDataset {
    pub fn from_values(grid: Grid, dim: usize, values: Vec<f64>, seed: u64) -> Result<Self> {
        let per_path = grid.len() * dim;
        if dim == 0 || values.len() % per_path != 0 {
            return Err(Error::Shape(format!(
                "{} values do not split into paths of {} x {}",
                values.len(),
                grid.len(),
                dim
            )));
        }
        Ok(PathDataset { grid, dim, n_paths: values.len() / per_path, values, seed, spec: None })
    }

    #[inline]
    fn stride(&self) -> usize {
        self.grid.len() * self.dim
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let s = self.stride();
        &self.values[p * s..(p + 1) * s]
    }

    pub fn value(&self, p: usize, k: usize) -> &[f64] {
        let base = p * self.stride() + k * self.dim;
        &self.values[base..base + self.dim]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|k| self.grid.time(k)).collect()
    }

    /// All values of coordinate `coord` at grid index `k`, one per path.
    pub fn marginal(&self, k: usize, coord: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, k)[coord]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> PathDataset {
        let mut values = Vec::with_capacity(indices.len() * self.stride());
        for &i in indices {
            values.extend_from_slice(self.path(i));
        }
        PathDataset { n_paths: indices.len(), values, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> PathDataset {
        PathDataset {
            grid: self.grid,
            dim: self.dim,
            n_paths: 0,
            values: Vec::new(),
            seed: self.seed,
            spec: self.spec.clone(),
        }
    }
}

/// Euler scheme on the regular grid with per-path noise substreams.
pub fn simulate(spec: &SdeSpec, horizon: f64, dt: f64, n_paths: usize, seed: u64) -> Result<PathDataset> {
    spec.validate()?;
    let mut ds = simulate_sde(spec, horizon, dt, n_paths, seed)?;
    ds.spec = Some(spec.clone());
    Ok(ds)
}

/// Euler scheme for any (possibly path-dependent) [`Sde`].
pub fn simulate_sde(sde: &dyn Sde, horizon: f64, dt: f64, n_paths: usize, seed: u64) -> Result<PathDataset> {
    let grid = Grid::new(horizon, dt)?;
    if n_paths == 0 {
        return Err(Error::config("n_paths", "must be at least 1"));
    }
    let d = sde.dim();
    let m = sde.noise_dim();
    if sde.x0().len() != d || sde.x0().iter().any(|v| !v.is_finite()) {
        return Err(Error::config("x0", format!("expected {d} finite entries")));
    }
    let stride = grid.len() * d;
    let mut values = vec![0.0; n_paths * stride];
    let sqrt_dt = dt.sqrt();

    values
        .par_chunks_mut(stride)
        .enumerate()
        .try_for_each(|(p, path)| -> Result<()> {
            let mut rng = rng::stream(seed, Domain::Simulation, p as u64);
            let mut mu = vec![0.0; d];
            let mut sig = vec![0.0; d * m];
            let mut eps = vec![0.0; m];
            path[..d].copy_from_slice(sde.x0());
            for k in 0..grid.n_steps {
                let t = grid.time(k);
                let (past, future) = path.split_at_mut((k + 1) * d);
                sde.drift(t, past, &mut mu);
                sde.diffusion(t, past, &mut sig);
                eps.iter_mut().for_each(|e| *e = rng::normal(&mut rng));
                let cur = &past[k * d..];
                for i in 0..d {
                    let noise: f64 = (0..m).map(|j| sig[i * m + j] * eps[j]).sum();
                    let next = cur[i] + mu[i] * dt + noise * sqrt_dt;
                    if !next.is_finite() {
                        return Err(Error::SimulationDivergence { path: p, step: k + 1 });
                    }
                    future[i] = next;
                }
            }
            Ok(())
        })?;

    Ok(PathDataset { grid, dim: d, n_paths, values, seed, spec: None })
}

/// Seeded shuffle of `0..n`, cut at `fraction`, each part re-sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("split.fraction", "must lie in (0, 1)"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Domain::Split, 0));
    let n_train = ((n as f64) * fraction).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut valid = idx[n_train..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}

pub fn split(ds: &PathDataset, fraction: f64, seed: u64) -> Result<(PathDataset, PathDataset)> {
    let (train, valid) = split_indices(ds.n_paths, fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&valid)))
}
