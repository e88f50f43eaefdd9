use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of an Itô process `dX = mu dt + sigma dW`.
///
/// `history` holds the path so far as consecutive rows of `dim()` values; the
/// last row is the current state. Markovian processes only read the last row.
pub trait Sde: Sync {
    fn dim(&self) -> usize;

    fn noise_dim(&self) -> usize {
        self.dim()
    }

    fn drift(&self, t: f64, history: &[f64], out: &mut [f64]);

    /// Writes the `dim x noise_dim` diffusion matrix in row-major order.
    fn diffusion(&self, t: f64, history: &[f64], out: &mut [f64]);

    fn x0(&self) -> &[f64];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdeKind {
    Gbm,
    Ou,
    Custom,
}

/// Serializable description of the benchmark processes.
///
/// GBM reads `mu`, `sigma`; OU reads `kappa`, `theta`, `sigma`. In more than one
/// dimension the coordinates are independent copies driven by independent noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    pub kind: SdeKind,
    pub params: BTreeMap<String, f64>,
    pub x0: Vec<f64>,
    pub dim: usize,
}

impl SdeSpec {
    pub fn gbm(mu: f64, sigma: f64, x0: f64) -> Self {
        SdeSpec {
            kind: SdeKind::Gbm,
            params: [("mu".to_string(), mu), ("sigma".to_string(), sigma)].into(),
            x0: vec![x0],
            dim: 1,
        }
    }

    pub fn ou(kappa: f64, theta: f64, sigma: f64, x0: f64) -> Self {
        SdeSpec {
            kind: SdeKind::Ou,
            params: [
                ("kappa".to_string(), kappa),
                ("theta".to_string(), theta),
                ("sigma".to_string(), sigma),
            ]
            .into(),
            x0: vec![x0],
            dim: 1,
        }
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::config(format!("spec.params.{name}"), "missing parameter"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("spec.dim", "must be positive"));
        }
        if self.x0.len() != self.dim {
            return Err(Error::config("spec.x0", format!("expected {} entries", self.dim)));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("spec.x0", "must be finite"));
        }
        match self.kind {
            SdeKind::Gbm => {
                self.param("mu")?;
                if !(self.param("sigma")? >= 0.0) {
                    return Err(Error::config("spec.params.sigma", "must be >= 0"));
                }
            }
            SdeKind::Ou => {
                self.param("theta")?;
                if !(self.param("kappa")? > 0.0) {
                    return Err(Error::config("spec.params.kappa", "must be > 0"));
                }
                if !(self.param("sigma")? >= 0.0) {
                    return Err(Error::config("spec.params.sigma", "must be >= 0"));
                }
            }
            SdeKind::Custom => {
                return Err(Error::config(
                    "spec.kind",
                    "custom processes are simulated through the Sde trait, not from a spec",
                ))
            }
        }
        Ok(())
    }

    fn p(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }
}

impl Sde for SdeSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _t: f64, history: &[f64], out: &mut [f64]) {
        let x = &history[history.len() - self.dim..];
        match self.kind {
            SdeKind::Gbm => {
                let mu = self.p("mu");
                out.iter_mut().zip(x).for_each(|(o, x)| *o = mu * x);
            }
            SdeKind::Ou => {
                let (kappa, theta) = (self.p("kappa"), self.p("theta"));
                out.iter_mut().zip(x).for_each(|(o, x)| *o = kappa * (theta - x));
            }
            SdeKind::Custom => out.fill(f64::NAN),
        }
    }

    fn diffusion(&self, _t: f64, history: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let x = &history[history.len() - d..];
        out.fill(0.0);
        let sigma = self.p("sigma");
        for i in 0..d {
            out[i * d + i] = match self.kind {
                SdeKind::Gbm => sigma * x[i],
                SdeKind::Ou => sigma,
                SdeKind::Custom => f64::NAN,
            };
        }
    }

    fn x0(&self) -> &[f64] {
        &self.x0
    }
}
