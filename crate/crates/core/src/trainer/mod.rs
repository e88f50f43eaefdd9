//! Mini-batch training of coefficient models with Adam, dropout and
//! validation-based model selection.

mod longterm;
mod model;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use longterm::augment_longterm;
pub use model::{CoefficientModel, ModelConfig, ModelManifest, TrainedModel};

use crate::error::{Error, Result};
use crate::losses::{build_targets, joint_loss, Scheme};
use crate::nn::{AdamConfig, AdamState, Mat, Tape};
use crate::njode::NjodeParams;
use crate::path_sim::ObservationSequence;
use crate::rng::{self, Domain};

/// Model selection floor: if the best validation epoch falls before
/// `before * epochs`, only epochs from `start * epochs` on are eligible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopFloor {
    pub before: f64,
    pub start: f64,
}

impl Default for EarlyStopFloor {
    fn default() -> Self {
        EarlyStopFloor { before: 0.45, start: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub dropout: f64,
    pub early_stop_floor: Option<EarlyStopFloor>,
    pub long_term_training: bool,
    /// Keep probability of [`augment_longterm`] when long-term training is on.
    pub long_term_keep: f64,
    /// Treat `G1` as a constant inside bias-corrected diffusion targets.
    pub stop_gradient: bool,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: Scheme::JointInstant,
            epochs: 200,
            batch_size: 200,
            lr: 1e-3,
            betas: (0.9, 0.999),
            weight_decay: 5e-4,
            dropout: 0.1,
            early_stop_floor: Some(EarlyStopFloor::default()),
            long_term_training: false,
            long_term_keep: 0.1,
            stop_gradient: true,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("train.lr", "must be finite and non-negative"));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::config("train.betas", "must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("train.dropout", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.long_term_keep) {
            return Err(Error::config("train.long_term_keep", "must lie in [0, 1]"));
        }
        if let Some(f) = self.early_stop_floor {
            if !(0.0..=1.0).contains(&f.before) || !(0.0..=1.0).contains(&f.start) {
                return Err(Error::config("train.early_stop_floor", "fractions must lie in [0, 1]"));
            }
        }
        if self.model.latent_dim == 0 || self.model.hidden_width == 0 || self.model.ode_substeps == 0 {
            return Err(Error::config("train.model", "sizes must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.betas.0, beta2: self.betas.1, eps: 1e-8, weight_decay: self.weight_decay }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_drift_loss: f64,
    pub valid_diffusion_loss: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// CSV with columns `epoch,train_loss,valid_loss,wall_time`; the wall-clock
    /// column is left out when `with_wall_time` is false.
    pub fn to_csv(&self, with_wall_time: bool) -> String {
        let mut out = String::from(if with_wall_time { "epoch,train_loss,valid_loss,wall_time\n" } else { "epoch,train_loss,valid_loss\n" });
        for r in &self.records {
            write!(out, "{},{:.16e},{:.16e}", r.epoch, r.train_loss, r.valid_loss).expect("string write");
            if with_wall_time {
                write!(out, ",{:.3}", r.wall_time).expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, with_wall_time: bool) -> Result<()> {
        fs::write(path, self.to_csv(with_wall_time))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub trained: TrainedModel,
    pub log: TrainLog,
    /// Reason training stopped early on a non-finite loss or gradient.
    pub divergence: Option<String>,
}

/// Loss of one batch, averaged over its histories with observations.
#[derive(Debug, Clone)]
struct BatchLoss {
    total: f64,
    drift: f64,
    diffusion: f64,
    weight: usize,
    grads: Option<Vec<Mat>>,
}

fn batch_loss(
    model: &CoefficientModel,
    scheme: Scheme,
    seqs: &[&ObservationSequence],
    stop_gradient: bool,
    dropout: Option<(f64, &mut rand_chacha::ChaCha8Rng)>,
    with_grads: bool,
) -> Result<Option<BatchLoss>> {
    let targets = build_targets(seqs, scheme)?;
    if targets.is_empty() {
        return Ok(None);
    }
    let mut tape = Tape::new();
    let Some((events, heads)) = model.record_heads(&mut tape, seqs, dropout)? else {
        return Ok(None);
    };
    if events != targets.events {
        return Err(Error::Shape("model events and targets are not aligned".into()));
    }
    let parts = joint_loss(&mut tape, &targets, heads, stop_gradient)?;
    let grads = if with_grads { Some(tape.backward(parts.total)?) } else { None };
    Ok(Some(BatchLoss {
        total: tape.scalar(parts.total),
        drift: tape.scalar(parts.drift),
        diffusion: tape.scalar(parts.diffusion),
        weight: seqs.len() - targets.excluded_paths,
        grads,
    }))
}

/// Total loss of `seqs` as one batch in evaluation mode, with its gradient per
/// tensor in [`CoefficientModel::tensors`] order.
pub fn loss_and_gradients(
    model: &CoefficientModel,
    scheme: Scheme,
    seqs: &[&ObservationSequence],
    stop_gradient: bool,
) -> Result<(f64, Vec<Mat>)> {
    model.check_scheme(scheme)?;
    let b = batch_loss(model, scheme, seqs, stop_gradient, None, true)?
        .ok_or_else(|| Error::Data("no history has observations after t_0".into()))?;
    Ok((b.total, b.grads.expect("gradients requested")))
}

/// Validation losses `(total, drift, diffusion)` in evaluation mode.
pub fn evaluate_loss(
    model: &CoefficientModel,
    scheme: Scheme,
    seqs: &[ObservationSequence],
    batch_size: usize,
    stop_gradient: bool,
) -> Result<(f64, f64, f64)> {
    let mut acc = (0.0, 0.0, 0.0);
    let mut weight = 0usize;
    let refs: Vec<&ObservationSequence> = seqs.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        if let Some(b) = batch_loss(model, scheme, chunk, stop_gradient, None, false)? {
            let w = b.weight as f64;
            acc.0 += b.total * w;
            acc.1 += b.drift * w;
            acc.2 += b.diffusion * w;
            weight += b.weight;
        }
    }
    if weight == 0 {
        return Err(Error::Data("no history has observations after t_0".into()));
    }
    let w = weight as f64;
    Ok((acc.0 / w, acc.1 / w, acc.2 / w))
}

/// `10 x` the largest `|Z^Q|` entry over `seqs` (at least `1`).
pub fn default_truncation_level(seqs: &[ObservationSequence]) -> Result<f64> {
    let refs: Vec<&ObservationSequence> = seqs.iter().collect();
    let mut max = 0.0f64;
    for chunk in refs.chunks(1000) {
        max = max.max(build_targets(chunk, Scheme::Instant)?.max_abs_zq());
    }
    Ok((10.0 * max).max(1.0))
}

#[derive(Debug, Clone)]
struct Candidate {
    epoch: usize,
    loss: f64,
    params: NjodeParams,
}

/// Best-so-far tracking for one network, over all epochs and over the floor window.
#[derive(Debug, Clone, Default)]
struct Selector {
    any: Option<Candidate>,
    late: Option<Candidate>,
}

impl Selector {
    fn offer(&mut self, epoch: usize, loss: f64, params: &NjodeParams, late: bool) {
        if !loss.is_finite() {
            return;
        }
        for (slot, eligible) in [(&mut self.any, true), (&mut self.late, late)] {
            if eligible && slot.as_ref().is_none_or(|c| loss < c.loss) {
                *slot = Some(Candidate { epoch, loss, params: params.clone() });
            }
        }
    }

    fn choose(self, before: usize) -> Option<Candidate> {
        match (self.any, self.late) {
            (Some(a), Some(l)) if a.epoch < before => Some(l),
            (a, _) => a,
        }
    }
}

/// Trains a fresh model for `config.scheme`.
pub fn train(config: &TrainConfig, train_obs: &[ObservationSequence], valid_obs: &[ObservationSequence]) -> Result<TrainResult> {
    config.validate()?;
    let dim = train_obs.first().map(|s| s.dim).ok_or_else(|| Error::Data("empty training set".into()))?;
    let model = CoefficientModel::init(config.scheme, dim, &config.model, config.seed)?;
    train_model(config, model, train_obs, valid_obs)
}

/// Trains `model` in place of a fresh initialization.
pub fn train_model(
    config: &TrainConfig,
    mut model: CoefficientModel,
    train_obs: &[ObservationSequence],
    valid_obs: &[ObservationSequence],
) -> Result<TrainResult> {
    config.validate()?;
    if train_obs.is_empty() || valid_obs.is_empty() {
        return Err(Error::Data("training and validation sets must be nonempty".into()));
    }
    model.check_scheme(config.scheme)?;
    let scheme = config.scheme;
    let truncation_level = default_truncation_level(train_obs)?;
    let mut adam = AdamState::new(config.adam(), &model.tensors());
    let epochs = config.epochs;
    let (before, start) = match config.early_stop_floor {
        Some(f) => ((f.before * epochs as f64).round() as usize, (f.start * epochs as f64).round() as usize),
        None => (0, 0),
    };
    let n_units = model.nets().len();
    let mut selectors = vec![Selector::default(); n_units];
    let mut log = TrainLog::default();
    let mut divergence = None;
    let clock = Instant::now();
    let mut order: Vec<usize> = (0..train_obs.len()).collect();

    'epochs: for epoch in 1..=epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(config.seed, Domain::Shuffle, epoch as u64));
        let mut acc = 0.0;
        let mut weight = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let step = adam.step;
            let picked: Vec<&ObservationSequence> = chunk.iter().map(|&i| &train_obs[i]).collect();
            let thinned;
            let seqs: Vec<&ObservationSequence> = if config.long_term_training {
                thinned = augment_longterm(&picked, config.long_term_keep, config.seed, step * config.batch_size as u64);
                thinned.iter().collect()
            } else {
                picked
            };
            let mut drop_rng = rng::stream(config.seed, Domain::Dropout, step);
            let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut drop_rng));
            let Some(bl) = batch_loss(&model, scheme, &seqs, config.stop_gradient, dropout, true)? else {
                continue;
            };
            if !bl.total.is_finite() {
                divergence = Some(format!("non-finite training loss in epoch {epoch}, batch {b}"));
                break 'epochs;
            }
            let grads = bl.grads.expect("requested");
            if let Err(e) = adam.step(&mut model.tensors_mut(), &grads) {
                divergence = Some(format!("epoch {epoch}, batch {b}: {e}"));
                break 'epochs;
            }
            acc += bl.total * bl.weight as f64;
            weight += bl.weight;
        }
        let (valid, valid_drift, valid_diffusion) = evaluate_loss(&model, scheme, valid_obs, config.batch_size, config.stop_gradient)?;
        log.records.push(EpochRecord {
            epoch,
            train_loss: if weight > 0 { acc / weight as f64 } else { f64::NAN },
            valid_loss: valid,
            valid_drift_loss: valid_drift,
            valid_diffusion_loss: valid_diffusion,
            wall_time: clock.elapsed().as_secs_f64(),
        });
        if !valid.is_finite() {
            divergence = Some(format!("non-finite validation loss in epoch {epoch}"));
            break;
        }
        let late = epoch >= start;
        let nets = model.nets();
        if n_units == 1 {
            selectors[0].offer(epoch, valid, nets[0], late);
        } else {
            selectors[0].offer(epoch, valid_drift, nets[0], late);
            selectors[1].offer(epoch, valid_diffusion, nets[1], late);
        }
    }

    let mut best_epoch = vec![0; n_units];
    for (i, (sel, net)) in selectors.into_iter().zip(model.nets_mut()).enumerate() {
        if let Some(c) = sel.choose(before) {
            best_epoch[i] = c.epoch;
            *net = c.params;
        }
    }
    Ok(TrainResult {
        trained: TrainedModel { scheme, model, seed: config.seed, step: adam.step, best_epoch, truncation_level },
        log,
        divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_sim::{observe, simulate, SdeSpec};

    fn data(n: usize, seed: u64) -> Vec<ObservationSequence> {
        let ds = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.05, n, seed).unwrap();
        observe(&ds, 0.3, seed + 1).unwrap()
    }

    fn small(scheme: Scheme, epochs: usize) -> TrainConfig {
        TrainConfig {
            scheme,
            epochs,
            batch_size: 16,
            model: ModelConfig { latent_dim: 8, hidden_width: 6, ..ModelConfig::default() },
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = small(Scheme::Base, 0);
        let (tr, va) = (data(20, 1), data(10, 2));
        let init = CoefficientModel::init(Scheme::Base, 1, &cfg.model, cfg.seed).unwrap();
        let out = train(&cfg, &tr, &va).unwrap();
        assert_eq!(out.trained.model, init);
        assert!(out.log.records.is_empty());
    }

    #[test]
    fn zero_learning_rate_keeps_validation_loss() {
        let mut cfg = small(Scheme::JointInstant, 3);
        cfg.lr = 0.0;
        let out = train(&cfg, &data(32, 1), &data(16, 2)).unwrap();
        let v: Vec<f64> = out.log.records.iter().map(|r| r.valid_loss).collect();
        assert!(v.windows(2).all(|w| w[0] == w[1]), "{v:?}");
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let cfg = small(Scheme::JointBase, 2);
        let (tr, va) = (data(40, 1), data(16, 2));
        let a = train(&cfg, &tr, &va).unwrap();
        let b = train(&cfg, &tr, &va).unwrap();
        assert_eq!(a.trained, b.trained);
        assert_eq!(a.log.to_csv(false), b.log.to_csv(false));
    }

    #[test]
    fn selected_epoch_has_minimal_permitted_validation_loss() {
        let mut cfg = small(Scheme::Instant, 6);
        cfg.lr = 0.01;
        cfg.early_stop_floor = None;
        let out = train(&cfg, &data(40, 1), &data(16, 2)).unwrap();
        let r = &out.log.records;
        let best_drift = r.iter().min_by(|a, b| a.valid_drift_loss.total_cmp(&b.valid_drift_loss)).unwrap().epoch;
        let best_diff = r.iter().min_by(|a, b| a.valid_diffusion_loss.total_cmp(&b.valid_diffusion_loss)).unwrap().epoch;
        assert_eq!(out.trained.best_epoch, vec![best_drift, best_diff]);
    }

    #[test]
    fn floor_rule_moves_early_optimum() {
        let mut s = Selector::default();
        let p = NjodeParams::zeros(crate::njode::NjodeArch::new(1, crate::njode::OutputLayout::Drift));
        for (e, l) in [(1, 1.0), (2, 0.1), (3, 0.5), (4, 0.7), (5, 0.6)] {
            s.offer(e, l, &p, e >= 4);
        }
        assert_eq!(s.clone().choose(3).unwrap().epoch, 5);
        assert_eq!(s.choose(2).unwrap().epoch, 2);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = small(Scheme::Base, 1);
        let out = train(&cfg, &data(20, 1), &data(10, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.trained.save(dir.path()).unwrap();
        let back = TrainedModel::load(dir.path()).unwrap();
        assert_eq!(back, out.trained);
        assert!(matches!(TrainedModel::load(&dir.path().join("nope")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.batch_size"),
            other => panic!("{other:?}"),
        }
    }
}
