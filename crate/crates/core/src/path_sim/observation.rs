use rayon::prelude::*;

use super::dataset::{Grid, PathDataset};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Observation history of one path: grid indices, masked values and masks.
///
/// Unobserved coordinates hold `0.0` in `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub grid: Grid,
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub masks: Vec<bool>,
}

impl ObservationSequence {
    /// Starts a history with a fully observed initial value at `t = 0`.
    pub fn new(grid: Grid, x0: &[f64]) -> Self {
        ObservationSequence {
            grid,
            dim: x0.len(),
            indices: vec![0],
            values: x0.to_vec(),
            masks: vec![true; x0.len()],
        }
    }

    pub fn push(&mut self, index: usize, values: &[f64], mask: &[bool]) -> Result<()> {
        if values.len() != self.dim || mask.len() != self.dim {
            return Err(Error::Shape(format!("observation needs {} coordinates", self.dim)));
        }
        if index > self.grid.n_steps {
            return Err(Error::Data(format!("observation index {index} is off the grid")));
        }
        if self.indices.last().is_some_and(|&last| index <= last) {
            return Err(Error::Data("observation times must increase".into()));
        }
        self.indices.push(index);
        self.values.extend(values.iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }));
        self.masks.extend_from_slice(mask);
        Ok(())
    }

    /// Checks the structural invariants (initial full mask, increasing on-grid times).
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if self.indices.first() != Some(&0) {
            return Err(Error::Data("first observation must be at t = 0".into()));
        }
        if !self.masks[..d].iter().all(|&m| m) {
            return Err(Error::Data("initial observation must be complete".into()));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) || self.indices.iter().any(|&i| i > self.grid.n_steps) {
            return Err(Error::Data("observation indices must increase on the grid".into()));
        }
        if self.values.len() != self.len() * d || self.masks.len() != self.len() * d {
            return Err(Error::Shape("observation buffers do not match the index count".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.grid.time(self.indices[k])
    }

    pub fn times(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| self.grid.time(i)).collect()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn mask(&self, k: usize) -> &[bool] {
        &self.masks[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_complete(&self, k: usize) -> bool {
        self.mask(k).iter().all(|&m| m)
    }

    /// Number of observations at grid indices `<= index`.
    pub fn kappa_index(&self, index: usize) -> usize {
        self.indices.partition_point(|&i| i <= index)
    }

    /// Grid index of the last observation at or before `index`.
    pub fn tau_index(&self, index: usize) -> usize {
        self.indices[self.kappa_index(index).max(1) - 1]
    }

    /// Last observation time `<= t`.
    pub fn tau(&self, t: f64) -> f64 {
        self.grid.time(self.tau_index(self.floor_index(t)))
    }

    /// Number of observations `<= t`.
    pub fn kappa(&self, t: f64) -> usize {
        if t < 0.0 {
            return 0;
        }
        self.kappa_index(self.floor_index(t))
    }

    fn floor_index(&self, t: f64) -> usize {
        let x = t / self.grid.dt;
        let r = x.round();
        let k = if (x - r).abs() < 1e-9 { r } else { x.floor() };
        (k.max(0.0) as usize).min(self.grid.n_steps)
    }

    /// History restricted to observations at grid indices `<= index`.
    pub fn truncated(&self, index: usize) -> ObservationSequence {
        let n = self.kappa_index(index);
        let d = self.dim;
        ObservationSequence {
            grid: self.grid,
            dim: d,
            indices: self.indices[..n].to_vec(),
            values: self.values[..n * d].to_vec(),
            masks: self.masks[..n * d].to_vec(),
        }
    }

    /// Last observed value of every coordinate up to and including observation `k`.
    pub fn last_observed(&self, k: usize) -> Vec<f64> {
        let d = self.dim;
        let mut out = self.value(0).to_vec();
        for j in 1..=k {
            for c in 0..d {
                if self.mask(j)[c] {
                    out[c] = self.value(j)[c];
                }
            }
        }
        out
    }
}

/// Parameters of the random observation framework.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationScheme {
    /// Probability that a non-initial grid time is an observation time.
    pub p: f64,
    /// If set, each coordinate of an observation is seen independently with this probability.
    pub coord_p: Option<f64>,
}

impl ObservationScheme {
    pub fn joint(p: f64) -> Self {
        ObservationScheme { p, coord_p: None }
    }
}

pub fn observe(ds: &PathDataset, p: f64, seed: u64) -> Result<Vec<ObservationSequence>> {
    observe_with(ds, ObservationScheme::joint(p), seed)
}

/// Draws observation times and masks for every path of `ds`.
///
/// `t_0` is always observed with a full mask. An observation whose coordinates are
/// all masked is dropped.
pub fn observe_with(ds: &PathDataset, scheme: ObservationScheme, seed: u64) -> Result<Vec<ObservationSequence>> {
    if !(0.0..=1.0).contains(&scheme.p) {
        return Err(Error::config("observation.p", "must lie in [0, 1]"));
    }
    if let Some(q) = scheme.coord_p {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::config("observation.coord_p", "must lie in [0, 1]"));
        }
    }
    let d = ds.dim;
    Ok((0..ds.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = rng::stream(seed, Domain::Observation, path as u64);
            let mut seq = ObservationSequence::new(ds.grid, ds.value(path, 0));
            let mut mask = vec![true; d];
            for k in 1..=ds.grid.n_steps {
                if rng::uniform(&mut rng) >= scheme.p {
                    continue;
                }
                if let Some(q) = scheme.coord_p {
                    mask.iter_mut().for_each(|m| *m = rng::uniform(&mut rng) < q);
                    if !mask.iter().any(|&m| m) {
                        continue;
                    }
                }
                seq.push(k, ds.value(path, k), &mask).expect("increasing on-grid index");
            }
            seq
        })
        .collect())
}

/// Complete observations at every grid point.
pub fn observe_all(ds: &PathDataset) -> Vec<ObservationSequence> {
    observe(ds, 1.0, 0).expect("p = 1 is valid")
}
