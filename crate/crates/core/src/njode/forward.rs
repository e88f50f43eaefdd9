use ndarray::{Array1, Array2, Axis};

use super::model::NjodeParams;
use super::runner::LatentBatch;
use crate::error::{Error, Result};
use crate::nn::Mat;
use crate::path_sim::{Grid, ObservationSequence};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Outputs around one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub index: usize,
    pub pre_latent: Array1<f64>,
    pub pre_output: Array1<f64>,
    pub post_output: Array1<f64>,
}

/// Latent path and outputs of one history on the data grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NjodeTrajectory {
    pub grid: Grid,
    /// Post-jump latent state per grid index.
    pub latent: Mat,
    /// Post-jump output per grid index.
    pub outputs: Mat,
    /// Observations after `t_0`, with left limits.
    pub jumps: Vec<Jump>,
}

impl NjodeTrajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|k| self.grid.time(k)).collect()
    }
}

pub(crate) fn row_matrix(values: &[f64]) -> Mat {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("one row")
}

pub(crate) fn mask_matrix(mask: &[bool]) -> Mat {
    Array2::from_shape_fn((1, mask.len()), |(_, c)| if mask[c] { 1.0 } else { 0.0 })
}

/// Runs the model over the whole grid of `obs`.
///
/// In [`Mode::Train`] hidden activations are dropped with `dropout_rate` using
/// a stream derived from `dropout_seed`.
pub fn forward(
    params: &NjodeParams,
    obs: &ObservationSequence,
    mode: Mode,
    dropout_rate: f64,
    dropout_seed: u64,
) -> Result<NjodeTrajectory> {
    obs.validate()?;
    if obs.dim != params.arch.dim {
        return Err(Error::Shape(format!("model expects dimension {}, got {}", params.arch.dim, obs.dim)));
    }
    let grid = obs.grid;
    let mut batch = LatentBatch::start(params, grid, &row_matrix(obs.value(0)))?;
    if mode == Mode::Train {
        batch = batch.with_dropout(dropout_rate, rng::stream(dropout_seed, Domain::Dropout, 0));
    }
    let mut latent = Array2::zeros((grid.len(), params.arch.latent_dim));
    let mut outputs = Array2::zeros((grid.len(), params.arch.output_dim()));
    latent.row_mut(0).assign(&batch.h.row(0));
    outputs.row_mut(0).assign(&batch.readout()?.row(0));
    let mut jumps = Vec::new();
    let mut next_obs = 1;
    for k in 1..grid.len() {
        batch.evolve_to(k)?;
        if next_obs < obs.len() && obs.indices[next_obs] == k {
            let pre_latent = batch.h.row(0).to_owned();
            let pre_output = batch.readout()?.row(0).to_owned();
            batch.jump(&[0], &row_matrix(obs.value(next_obs)), &mask_matrix(obs.mask(next_obs)))?;
            let post = batch.readout()?;
            jumps.push(Jump { index: k, pre_latent, pre_output, post_output: post.row(0).to_owned() });
            outputs.row_mut(k).assign(&post.row(0));
            next_obs += 1;
        } else {
            outputs.row_mut(k).assign(&batch.readout()?.row(0));
        }
        latent.row_mut(k).assign(&batch.h.row(0));
    }
    Ok(NjodeTrajectory { grid, latent, outputs, jumps })
}

/// Feeds the observations of `obs` up to grid index `s_index` into a fresh batch of one row.
pub(crate) fn condition<'a>(params: &'a NjodeParams, obs: &ObservationSequence, s_index: usize) -> Result<LatentBatch<'a>> {
    condition_rows(params, obs, s_index, 1)
}

/// Like [`condition`] with `rows` identical copies of the history.
pub(crate) fn condition_rows<'a>(
    params: &'a NjodeParams,
    obs: &ObservationSequence,
    s_index: usize,
    rows: usize,
) -> Result<LatentBatch<'a>> {
    obs.validate()?;
    let x0 = row_matrix(obs.value(0)).broadcast((rows, obs.dim)).expect("broadcast").to_owned();
    let mut batch = LatentBatch::start(params, obs.grid, &x0)?;
    let all: Vec<usize> = (0..rows).collect();
    for k in 1..obs.kappa_index(s_index) {
        batch.evolve_to(obs.indices[k])?;
        let x = row_matrix(obs.value(k)).broadcast((rows, obs.dim)).expect("broadcast").to_owned();
        let m = mask_matrix(obs.mask(k)).broadcast((rows, obs.dim)).expect("broadcast").to_owned();
        batch.jump(&all, &x, &m)?;
    }
    Ok(batch)
}

/// Outputs `G_{s,h}` for `h = 0, dt, ..., horizon_steps * dt` given the observations up to `s`.
///
/// Row `0` is the post-jump output at `s`; later rows continue the latent ODE
/// without further observations.
pub fn predict_window(params: &NjodeParams, obs: &ObservationSequence, s_index: usize, horizon_steps: usize) -> Result<Mat> {
    if !obs.indices.contains(&s_index) {
        return Err(Error::Data(format!("grid index {s_index} is not an observation time")));
    }
    if s_index + horizon_steps > obs.grid.n_steps {
        return Err(Error::Data(format!(
            "prediction window of {horizon_steps} steps from index {s_index} exceeds the horizon"
        )));
    }
    let mut batch = condition(params, obs, s_index)?;
    let mut rows = vec![batch.readout()?];
    for h in 1..=horizon_steps {
        batch.evolve_to(s_index + h)?;
        rows.push(batch.readout()?);
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    Ok(ndarray::concatenate(Axis(0), &views).expect("equal widths"))
}
