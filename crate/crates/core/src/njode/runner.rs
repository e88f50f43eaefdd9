use ndarray::{concatenate, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::model::{obs_input, time_features, NjodeParams};
use crate::error::{Error, Result};
use crate::nn::Mat;
use crate::path_sim::Grid;

/// Evaluation-mode latent states of a batch of paths sharing one clock.
///
/// All rows advance together on the data grid; jumps update a subset of rows.
#[derive(Debug, Clone)]
pub struct LatentBatch<'a> {
    params: &'a NjodeParams,
    grid: Grid,
    pub(crate) h: Mat,
    /// Observation input at the last observation of every row.
    u_last: Mat,
    /// Last observed value of every coordinate.
    x_last: Mat,
    tau: Vec<f64>,
    index: usize,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl<'a> LatentBatch<'a> {
    /// `H_0 = rho(0, 0, U_0)` for complete initial values `x0` (`B x d`).
    pub fn start(params: &'a NjodeParams, grid: Grid, x0: &Mat) -> Result<Self> {
        let arch = &params.arch;
        if x0.ncols() != arch.dim {
            return Err(Error::Shape(format!("initial values need {} columns", arch.dim)));
        }
        let b = x0.nrows();
        let u0 = obs_input(arch, x0, &Array2::ones(x0.dim()));
        let zeros = vec![0.0; b];
        let mut parts = vec![u0.clone(), time_features(&zeros, &zeros)];
        if arch.recurrent_encoder {
            parts.push(Array2::zeros((b, arch.latent_dim)));
        }
        let input = concat(&parts);
        let h = params.encoder.forward(&input)?;
        let out = LatentBatch { params, grid, h, u_last: u0, x_last: x0.clone(), tau: zeros, index: 0, dropout: None };
        out.check()?;
        Ok(out)
    }

    /// Training-mode variant: hidden activations are dropped with probability `rate`
    /// for every later network call. The initial encoding is not affected.
    pub fn with_dropout(mut self, rate: f64, rng: ChaCha8Rng) -> Self {
        if rate > 0.0 {
            self.dropout = Some((rate, rng));
        }
        self
    }

    fn call(&mut self, net: Net, x: &Mat) -> Result<Mat> {
        let params = self.params;
        let mlp = match net {
            Net::Encoder => &params.encoder,
            Net::Field => &params.field,
            Net::Decoder => &params.decoder,
        };
        match &mut self.dropout {
            None => mlp.forward(x),
            Some((rate, rng)) => {
                let masks = mlp.dropout_masks(x.nrows(), *rate, rng);
                mlp.forward_masked(x, Some(&masks))
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time(&self) -> f64 {
        self.grid.time(self.index)
    }

    pub fn last_observed(&self) -> &Mat {
        &self.x_last
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    fn check(&self) -> Result<()> {
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::LatentDivergence { time: self.time(), step: self.index });
        }
        Ok(())
    }

    /// Euler integration of the vector field up to grid index `to`, no jumps.
    pub fn evolve_to(&mut self, to: usize) -> Result<()> {
        if to > self.grid.n_steps {
            return Err(Error::Data(format!("grid index {to} is beyond the horizon")));
        }
        let n_sub = self.params.arch.ode_substeps;
        let h_sub = self.grid.dt / n_sub as f64;
        while self.index < to {
            for sub in 0..n_sub {
                let t = self.grid.time(self.index) + sub as f64 * h_sub;
                let since: Vec<f64> = self.tau.iter().map(|tau| t - tau).collect();
                let input = concat(&[self.h.clone(), self.u_last.clone(), time_features(&self.tau, &since)]);
                let f = self.call(Net::Field, &input)?;
                self.h.scaled_add(h_sub, &f);
            }
            self.index += 1;
            self.check()?;
        }
        Ok(())
    }

    /// Observation at the current time for `rows`; `x` and `mask` are `rows x d`.
    pub fn jump(&mut self, rows: &[usize], x: &Mat, mask: &Mat) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let arch = &self.params.arch;
        let t = self.time();
        let mut x_imp = x.clone();
        for (i, &r) in rows.iter().enumerate() {
            for c in 0..arch.dim {
                if mask[[i, c]] > 0.5 {
                    self.x_last[[r, c]] = x[[i, c]];
                } else {
                    x_imp[[i, c]] = self.x_last[[r, c]];
                }
            }
        }
        let u = obs_input(arch, &x_imp, mask);
        let ts = vec![t; rows.len()];
        let since: Vec<f64> = rows.iter().map(|&r| t - self.tau[r]).collect();
        let mut parts = vec![u.clone(), time_features(&ts, &since)];
        if arch.recurrent_encoder {
            parts.push(self.h.select(Axis(0), rows));
        }
        let h_new = self.call(Net::Encoder, &concat(&parts))?;
        for (i, &r) in rows.iter().enumerate() {
            self.h.row_mut(r).assign(&h_new.row(i));
            self.u_last.row_mut(r).assign(&u.row(i));
            self.tau[r] = t;
        }
        self.check()
    }

    /// Decoder output for every row.
    pub fn readout(&mut self) -> Result<Mat> {
        let h = self.h.clone();
        self.call(Net::Decoder, &h)
    }
}

#[derive(Clone, Copy)]
enum Net {
    Encoder,
    Field,
    Decoder,
}

pub(crate) fn concat(parts: &[Mat]) -> Mat {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(1), &views).expect("row counts agree")
}
