use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
            Activation::Tanh => v.tanh(),
        }
    }
}

/// Architecture of a feedforward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Adds the input, zero-padded or truncated to the output width.
    pub residual: bool,
    /// Restricts the residual to the first input columns.
    #[serde(default)]
    pub skip_cols: Option<usize>,
    /// Optional smooth output bound `c * tanh(y / c)`.
    pub output_bound: Option<f64>,
}

impl MlpShape {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }
}

/// Weights of a feedforward network: per layer a `fan_in x fan_out` matrix and a `1 x fan_out` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub shape: MlpShape,
    pub weights: Vec<Mat>,
    pub biases: Vec<Mat>,
}

/// One dropout mask per hidden layer, already scaled by `1 / (1 - rate)`.
pub type DropoutMasks = Vec<Mat>;

impl MlpParams {
    /// Xavier-uniform weights `U(-sqrt(6 / (fan_in + fan_out)), ..)`, zero biases.
    pub fn init<R: Rng>(shape: MlpShape, rng: &mut R) -> Self {
        let widths = shape.widths();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| bound * (2.0 * rng::uniform(rng) - 1.0)));
            biases.push(Array2::zeros((1, w[1])));
        }
        MlpParams { shape, weights, biases }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        let widths = shape.widths();
        MlpParams {
            weights: widths.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: widths.windows(2).map(|w| Array2::zeros((1, w[1]))).collect(),
            shape,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Parameter matrices in checkpoint order: `w_0, b_0, w_1, b_1, ...`.
    pub fn tensors(&self) -> Vec<&Mat> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let widths = self.shape.widths();
        if self.weights.len() != widths.len() - 1 || self.biases.len() != widths.len() - 1 {
            return Err(Error::Shape("layer count does not match the architecture".into()));
        }
        for (l, w) in widths.windows(2).enumerate() {
            if self.weights[l].dim() != (w[0], w[1]) || self.biases[l].dim() != (1, w[1]) {
                return Err(Error::Shape(format!("layer {l} has the wrong shape")));
            }
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data("non-finite weight".into()));
        }
        Ok(())
    }

    /// Batch forward pass without recording (evaluation mode).
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        self.forward_masked(x, None)
    }

    /// Batch forward pass without recording; `dropout` masks the hidden activations.
    pub fn forward_masked(&self, x: &Mat, dropout: Option<&DropoutMasks>) -> Result<Mat> {
        if x.ncols() != self.shape.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.shape.input_dim,
                x.ncols()
            )));
        }
        let last = self.n_layers() - 1;
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 1..=last {
            h.mapv_inplace(|v| self.shape.activation.apply(v));
            if let Some(masks) = dropout {
                h *= &masks[l - 1];
            }
            h = h.dot(&self.weights[l]) + &self.biases[l];
        }
        if let Some(c) = self.shape.output_bound {
            h.mapv_inplace(|v| c * (v / c).tanh());
        }
        if self.shape.residual {
            let k = h.ncols().min(x.ncols()).min(self.shape.skip_cols.unwrap_or(usize::MAX));
            h.slice_mut(s![.., ..k]).zip_mut_with(&x.slice(s![.., ..k]), |o, v| *o += v);
        }
        Ok(h)
    }

    /// Records the forward pass on `tape`. `params` are the tape leaves for
    /// [`Self::tensors`]; `dropout` masks the hidden activations when given.
    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], x: Var, dropout: Option<&DropoutMasks>) -> Result<Var> {
        if tape.value(x).ncols() != self.shape.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.shape.input_dim,
                tape.value(x).ncols()
            )));
        }
        let last = self.n_layers() - 1;
        let mut h = tape.linear(x, params[0], params[1])?;
        for l in 1..=last {
            h = match self.shape.activation {
                Activation::Relu => tape.relu(h),
                Activation::Tanh => tape.tanh(h),
                Activation::Identity => h,
            };
            if let Some(masks) = dropout {
                h = tape.mul_const(h, masks[l - 1].clone())?;
            }
            h = tape.linear(h, params[2 * l], params[2 * l + 1])?;
        }
        if let Some(c) = self.shape.output_bound {
            h = tape.soft_clamp(h, c);
        }
        if self.shape.residual {
            h = tape.add_embed(h, x, self.shape.skip_cols.unwrap_or(usize::MAX))?;
        }
        Ok(h)
    }

    /// Inverted-dropout masks for a batch of `rows` samples.
    pub fn dropout_masks<R: Rng>(&self, rows: usize, rate: f64, rng: &mut R) -> DropoutMasks {
        let keep = 1.0 - rate;
        self.shape
            .hidden_dims
            .iter()
            .map(|&w| Array2::from_shape_fn((rows, w), |_| if rng::uniform(rng) < keep { 1.0 / keep } else { 0.0 }))
            .collect()
    }
}
