//! Exact-transition samplers for GBM and OU, used as independent references.

use rayon::prelude::*;

use super::dataset::{Grid, PathDataset};
use super::sde::{SdeKind, SdeSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

pub fn simulate_exact(spec: &SdeSpec, horizon: f64, dt: f64, n_paths: usize, seed: u64) -> Result<PathDataset> {
    spec.validate()?;
    let grid = Grid::new(horizon, dt)?;
    let d = spec.dim;
    let stride = grid.len() * d;
    let mut values = vec![0.0; n_paths * stride];
    let sigma = spec.param("sigma")?;
    let step: Box<dyn Fn(f64, f64) -> f64 + Sync> = match spec.kind {
        SdeKind::Gbm => {
            let mu = spec.param("mu")?;
            let drift = (mu - 0.5 * sigma * sigma) * dt;
            let vol = sigma * dt.sqrt();
            Box::new(move |x, eps| x * (drift + vol * eps).exp())
        }
        SdeKind::Ou => {
            let kappa = spec.param("kappa")?;
            let theta = spec.param("theta")?;
            let beta = (-kappa * dt).exp();
            let vol = sigma * ((1.0 - (-2.0 * kappa * dt).exp()) / (2.0 * kappa)).sqrt();
            Box::new(move |x, eps| x * beta + theta * (1.0 - beta) + vol * eps)
        }
        SdeKind::Custom => return Err(Error::config("spec.kind", "no exact transition for custom processes")),
    };
    values.par_chunks_mut(stride).enumerate().for_each(|(p, path)| {
        let mut rng = rng::stream(seed, Domain::Exact, p as u64);
        path[..d].copy_from_slice(&spec.x0);
        for k in 0..grid.n_steps {
            for i in 0..d {
                path[(k + 1) * d + i] = step(path[k * d + i], rng::normal(&mut rng));
            }
        }
    });
    Ok(PathDataset { grid, dim: d, n_paths, values, seed, spec: Some(spec.clone()) })
}
