use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Mat, MlpParams, MlpShape};
use crate::rng::{self, Domain};

/// Which quantities a model's decoder emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLayout {
    /// `G1`, `d` values.
    Drift,
    /// `G2`, a `d x d` factor of `S = G2 G2^T`.
    Diffusion,
    /// `[G1, G2]` from one latent state.
    Joint,
}

impl OutputLayout {
    pub fn width(self, d: usize) -> usize {
        match self {
            OutputLayout::Drift => d,
            OutputLayout::Diffusion => d * d,
            OutputLayout::Joint => d + d * d,
        }
    }

    /// Column ranges of `G1` and `G2` in the decoder output.
    pub fn drift_cols(self, d: usize) -> Option<(usize, usize)> {
        match self {
            OutputLayout::Drift | OutputLayout::Joint => Some((0, d)),
            OutputLayout::Diffusion => None,
        }
    }

    pub fn diffusion_cols(self, d: usize) -> Option<(usize, usize)> {
        match self {
            OutputLayout::Drift => None,
            OutputLayout::Diffusion => Some((0, d * d)),
            OutputLayout::Joint => Some((d, d + d * d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NjodeArch {
    pub dim: usize,
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub output: OutputLayout,
    /// Feed the squared-increment process (always `0` at observations) as extra input.
    pub z_input: bool,
    pub recurrent_encoder: bool,
    pub residual_encoder: bool,
    pub residual_decoder: bool,
    /// Explicit Euler substeps per data-grid cell.
    pub ode_substeps: usize,
    pub output_bound: Option<f64>,
}

impl NjodeArch {
    pub fn new(dim: usize, output: OutputLayout) -> Self {
        NjodeArch {
            dim,
            latent_dim: 100,
            hidden_width: 50,
            output,
            z_input: false,
            recurrent_encoder: true,
            residual_encoder: true,
            residual_decoder: true,
            ode_substeps: 1,
            output_bound: None,
        }
    }

    /// Width of the observation input: imputed `x`, `mask` and `z = 0` columns.
    pub fn obs_input_dim(&self) -> usize {
        2 * self.dim + if self.z_input { self.dim * self.dim } else { 0 }
    }

    /// `[U_t, t, t - tau_prev, H_{t-} (recurrent only)]`. The encoder skip path
    /// covers only `[U_t, t, t - tau_prev]`, so `H_{t-}` enters through the network alone.
    pub fn encoder_input_dim(&self) -> usize {
        (if self.recurrent_encoder { self.latent_dim } else { 0 }) + self.obs_input_dim() + 2
    }

    /// `[H, U_tau, tau, t - tau]`
    pub fn field_input_dim(&self) -> usize {
        self.latent_dim + self.obs_input_dim() + 2
    }

    pub fn output_dim(&self) -> usize {
        self.output.width(self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.latent_dim == 0 || self.hidden_width == 0 {
            return Err(Error::config("model", "dimensions must be positive"));
        }
        if self.ode_substeps == 0 {
            return Err(Error::config("model.ode_substeps", "must be at least 1"));
        }
        Ok(())
    }

    fn encoder_shape(&self) -> MlpShape {
        let mut m = self.mlp(self.encoder_input_dim(), self.latent_dim, self.residual_encoder, None);
        m.skip_cols = Some(self.obs_input_dim() + 2);
        m
    }

    /// Column offsets of `x`, `mask` and `z` in the observation input. The
    /// order follows the output layout, so the decoder skip path maps `x` onto
    /// `G1` and the `z = 0` input onto `G2`.
    pub fn obs_input_cols(&self) -> (usize, usize, Option<usize>) {
        let (d, dd) = (self.dim, self.dim * self.dim);
        match (self.output, self.z_input) {
            (OutputLayout::Diffusion, true) => (dd, dd + d, Some(0)),
            (OutputLayout::Joint, true) => (0, d + dd, Some(d)),
            (_, true) => (0, d, Some(2 * d)),
            (_, false) => (0, d, None),
        }
    }

    /// Skip path of the decoder: output heads with a matching input channel.
    fn decoder_shape(&self) -> MlpShape {
        let (d, dd) = (self.dim, self.dim * self.dim);
        let cols = match (self.output, self.z_input) {
            (OutputLayout::Drift, _) | (OutputLayout::Joint, false) => Some(d),
            (OutputLayout::Diffusion, true) => Some(dd),
            (OutputLayout::Joint, true) => Some(d + dd),
            (OutputLayout::Diffusion, false) => None,
        };
        let mut m = self.mlp(self.latent_dim, self.output_dim(), self.residual_decoder && cols.is_some(), self.output_bound);
        m.skip_cols = cols;
        m
    }

    fn mlp(&self, input_dim: usize, output_dim: usize, residual: bool, bound: Option<f64>) -> MlpShape {
        MlpShape {
            input_dim,
            hidden_dims: vec![self.hidden_width],
            output_dim,
            activation: Activation::Relu,
            residual,
            skip_cols: None,
            output_bound: bound,
        }
    }
}

/// Encoder `rho`, vector field `f` and decoder `g` of one neural jump ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct NjodeParams {
    pub arch: NjodeArch,
    pub encoder: MlpParams,
    pub field: MlpParams,
    pub decoder: MlpParams,
}

impl NjodeParams {
    pub fn init(arch: NjodeArch, seed: u64, stream: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng::stream(seed, Domain::Init, stream);
        let enc = arch.encoder_shape();
        let field = arch.mlp(arch.field_input_dim(), arch.latent_dim, false, arch.output_bound);
        let dec = arch.decoder_shape();
        Ok(NjodeParams {
            encoder: MlpParams::init(enc, &mut r),
            field: MlpParams::init(field, &mut r),
            decoder: MlpParams::init(dec, &mut r),
            arch,
        })
    }

    /// All-zero networks with the layout of `arch`, e.g. to be filled from a checkpoint.
    pub fn zeros_like(arch: NjodeArch) -> Self {
        let enc = arch.encoder_shape();
        let field = arch.mlp(arch.field_input_dim(), arch.latent_dim, false, arch.output_bound);
        let dec = arch.decoder_shape();
        NjodeParams {
            encoder: MlpParams::zeros(enc),
            field: MlpParams::zeros(field),
            decoder: MlpParams::zeros(dec),
            arch,
        }
    }

    /// All-zero networks (residual paths switched off), mostly useful in tests.
    pub fn zeros(mut arch: NjodeArch) -> Self {
        arch.residual_encoder = false;
        arch.residual_decoder = false;
        let enc = arch.mlp(arch.encoder_input_dim(), arch.latent_dim, false, None);
        let field = arch.mlp(arch.field_input_dim(), arch.latent_dim, false, None);
        let dec = arch.mlp(arch.latent_dim, arch.output_dim(), false, None);
        NjodeParams {
            encoder: MlpParams::zeros(enc),
            field: MlpParams::zeros(field),
            decoder: MlpParams::zeros(dec),
            arch,
        }
    }

    /// Tensors in checkpoint order: encoder, vector field, decoder; each `w_0, b_0, w_1, b_1`.
    pub fn tensors(&self) -> Vec<&Mat> {
        let mut out = self.encoder.tensors();
        out.extend(self.field.tensors());
        out.extend(self.decoder.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.field.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out
    }

    pub fn n_tensors(&self) -> [usize; 3] {
        [self.encoder.tensors().len(), self.field.tensors().len(), self.decoder.tensors().len()]
    }

    pub fn n_weights(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.encoder.validate()?;
        self.field.validate()?;
        self.decoder.validate()?;
        if self.encoder.shape.input_dim != self.arch.encoder_input_dim()
            || self.field.shape.input_dim != self.arch.field_input_dim()
            || self.decoder.shape.output_dim != self.arch.output_dim()
        {
            return Err(Error::Shape("network shapes do not match the model layout".into()));
        }
        Ok(())
    }
}

/// Observation-input rows for a batch; the `z` columns stay `0`.
pub(crate) fn obs_input(arch: &NjodeArch, x: &Mat, mask: &Mat) -> Mat {
    let d = arch.dim;
    let (xc, mc, _) = arch.obs_input_cols();
    let mut u = Array2::zeros((x.nrows(), arch.obs_input_dim()));
    u.slice_mut(s![.., xc..xc + d]).assign(x);
    u.slice_mut(s![.., mc..mc + d]).assign(mask);
    u
}

/// Column of two time features per row.
pub(crate) fn time_features(a: &[f64], b: &[f64]) -> Mat {
    Array2::from_shape_fn((a.len(), 2), |(r, c)| if c == 0 { a[r] } else { b[r] })
}
