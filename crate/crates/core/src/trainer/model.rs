use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::{HeadOutputs, Scheme};
use crate::nn::checkpoint::{read_weights, write_weights};
use crate::nn::{Mat, Tape, Var};
use crate::njode::{record_batch, NjodeArch, NjodeParams, OutputLayout};
use crate::path_sim::ObservationSequence;

/// Architecture knobs shared by every network of a coefficient model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub ode_substeps: usize,
    pub recurrent_encoder: bool,
    pub residual_encoder: bool,
    pub residual_decoder: bool,
    pub output_bound: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 100,
            hidden_width: 50,
            ode_substeps: 1,
            recurrent_encoder: true,
            residual_encoder: true,
            residual_decoder: true,
            output_bound: None,
        }
    }
}

impl ModelConfig {
    fn arch(&self, dim: usize, output: OutputLayout, z_input: bool) -> NjodeArch {
        NjodeArch {
            dim,
            latent_dim: self.latent_dim,
            hidden_width: self.hidden_width,
            output,
            z_input,
            recurrent_encoder: self.recurrent_encoder,
            residual_encoder: self.residual_encoder,
            residual_decoder: self.residual_decoder,
            ode_substeps: self.ode_substeps,
            output_bound: self.output_bound,
        }
    }

    /// Networks needed by `scheme`: one joint model or a drift and a diffusion model.
    pub fn architectures(&self, scheme: Scheme, dim: usize) -> Vec<NjodeArch> {
        match scheme {
            Scheme::Base => vec![self.arch(dim, OutputLayout::Drift, false), self.arch(dim, OutputLayout::Diffusion, true)],
            Scheme::Instant => vec![self.arch(dim, OutputLayout::Drift, false), self.arch(dim, OutputLayout::Diffusion, false)],
            Scheme::JointBase => vec![self.arch(dim, OutputLayout::Joint, true)],
            Scheme::JointInstant => vec![self.arch(dim, OutputLayout::Joint, false)],
        }
    }
}

/// The network(s) behind the drift and diffusion estimators of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientModel {
    /// One latent state, decoder emits `[G1, G2]`.
    Joint(NjodeParams),
    /// Independent drift (`G1`) and diffusion (`G2`) models.
    Separate { drift: NjodeParams, diffusion: NjodeParams },
}

impl CoefficientModel {
    pub fn init(scheme: Scheme, dim: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut nets = config
            .architectures(scheme, dim)
            .into_iter()
            .enumerate()
            .map(|(i, arch)| NjodeParams::init(arch, seed, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Self::from_nets(scheme, &mut nets)
    }

    fn from_nets(scheme: Scheme, nets: &mut Vec<NjodeParams>) -> Result<Self> {
        match (scheme.is_joint(), nets.len()) {
            (true, 1) => Ok(CoefficientModel::Joint(nets.remove(0))),
            (false, 2) => {
                let diffusion = nets.remove(1);
                let drift = nets.remove(0);
                Ok(CoefficientModel::Separate { drift, diffusion })
            }
            _ => Err(Error::config("scheme", format!("{} networks do not fit scheme {scheme}", nets.len()))),
        }
    }

    pub fn dim(&self) -> usize {
        self.nets()[0].arch.dim
    }

    pub fn nets(&self) -> Vec<&NjodeParams> {
        match self {
            CoefficientModel::Joint(p) => vec![p],
            CoefficientModel::Separate { drift, diffusion } => vec![drift, diffusion],
        }
    }

    pub fn nets_mut(&mut self) -> Vec<&mut NjodeParams> {
        match self {
            CoefficientModel::Joint(p) => vec![p],
            CoefficientModel::Separate { drift, diffusion } => vec![drift, diffusion],
        }
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        self.nets().into_iter().flat_map(|n| n.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        self.nets_mut().into_iter().flat_map(|n| n.tensors_mut()).collect()
    }

    /// Checks that the networks produce the outputs `scheme` needs.
    pub fn check_scheme(&self, scheme: Scheme) -> Result<()> {
        let ok = match self {
            CoefficientModel::Joint(p) => scheme.is_joint() && p.arch.output == OutputLayout::Joint,
            CoefficientModel::Separate { drift, diffusion } => {
                !scheme.is_joint()
                    && drift.arch.output == OutputLayout::Drift
                    && diffusion.arch.output == OutputLayout::Diffusion
                    && drift.arch.dim == diffusion.arch.dim
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("scheme", format!("model layout does not match scheme {scheme}")))
        }
    }

    /// SHA-256 of the little-endian weights, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tensors() {
            for v in t.iter() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Records the batch forward pass and returns the per-event heads, or `None`
    /// without observations after `t_0`. Tape parameters are created in
    /// [`Self::tensors`] order, so gradients line up with it.
    pub(crate) fn record_heads(
        &self,
        tape: &mut Tape,
        seqs: &[&ObservationSequence],
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<Option<(Vec<(usize, usize)>, HeadOutputs)>> {
        let mut outs = Vec::new();
        for net in self.nets() {
            let vars: Vec<Var> = net.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
            let drop = dropout.as_mut().map(|(rate, rng)| (*rate, &mut **rng));
            match record_batch(tape, &vars, net, seqs, drop)? {
                Some(o) => outs.push(o),
                None => return Ok(None),
            }
        }
        let d = self.dim();
        let heads = match self {
            CoefficientModel::Joint(_) => {
                let o = &outs[0];
                HeadOutputs {
                    drift_pre: tape.slice_cols(o.pre, 0, d)?,
                    drift_post: tape.slice_cols(o.post, 0, d)?,
                    diffusion_pre: tape.slice_cols(o.pre, d, d + d * d)?,
                    diffusion_post: tape.slice_cols(o.post, d, d + d * d)?,
                }
            }
            CoefficientModel::Separate { .. } => {
                if outs[0].events != outs[1].events {
                    return Err(Error::Shape("drift and diffusion models saw different events".into()));
                }
                HeadOutputs {
                    drift_pre: outs[0].pre,
                    drift_post: outs[0].post,
                    diffusion_pre: outs[1].pre,
                    diffusion_post: outs[1].post,
                }
            }
        };
        Ok(Some((outs.swap_remove(0).events, heads)))
    }
}

/// `model.json` of a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub scheme: Scheme,
    pub architectures: Vec<NjodeArch>,
    pub seed: u64,
    /// Optimizer steps taken when the stored weights were selected.
    pub step: u64,
    pub best_epoch: Vec<usize>,
    /// Default truncation level derived from the training data.
    pub truncation_level: f64,
    pub checksum: String,
    /// Tensor layout of `weights.bin`: per network encoder, vector field,
    /// decoder, each as `w_0, b_0, w_1, b_1` with `w` stored `in x out`.
    pub layout: Vec<[usize; 2]>,
}

/// A coefficient model together with what generation needs to know about it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub scheme: Scheme,
    pub model: CoefficientModel,
    pub seed: u64,
    pub step: u64,
    pub best_epoch: Vec<usize>,
    pub truncation_level: f64,
}

impl TrainedModel {
    pub fn manifest(&self) -> ModelManifest {
        ModelManifest {
            scheme: self.scheme,
            architectures: self.model.nets().iter().map(|n| n.arch.clone()).collect(),
            seed: self.seed,
            step: self.step,
            best_epoch: self.best_epoch.clone(),
            truncation_level: self.truncation_level,
            checksum: self.model.checksum(),
            layout: self.model.tensors().iter().map(|t| [t.nrows(), t.ncols()]).collect(),
        }
    }

    /// Writes `model.json` and `weights.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&self.manifest())?)?;
        write_weights(&dir.join("weights.bin"), &self.model.tensors())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("model.json");
        if !manifest_path.exists() {
            return Err(Error::MissingFile(manifest_path));
        }
        let m: ModelManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        let mut nets = m
            .architectures
            .iter()
            .map(|arch| {
                arch.validate()?;
                Ok(NjodeParams::zeros_like(arch.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = CoefficientModel::from_nets(m.scheme, &mut nets)?;
        model.check_scheme(m.scheme)?;
        read_weights(&dir.join("weights.bin"), &mut model.tensors_mut())?;
        if model.checksum() != m.checksum {
            return Err(Error::Data(format!("{}: weights do not match the recorded checksum", dir.display())));
        }
        Ok(TrainedModel {
            scheme: m.scheme,
            model,
            seed: m.seed,
            step: m.step,
            best_epoch: m.best_epoch,
            truncation_level: m.truncation_level,
        })
    }
}
