//! Drift and diffusion estimates from model outputs: baseline `Delta`-step
//! quotients, instantaneous readouts, truncation and PSD square roots.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance of [`psd_sqrt`], relative to `max(1, max |S_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `mu_hat` (length `d`), `Sigma_hat` and a square root `R` with `R R^T = Sigma_hat`,
/// both `d x d` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub sqrt_sigma: Vec<f64>,
    pub truncation_level: f64,
    pub truncated_mu: bool,
    pub truncated_sigma: bool,
    /// Negative eigenvalues set to zero while taking the square root.
    pub clamped_eigenvalues: usize,
    /// `sqrt_sigma` is the model's own diffusion factor `G2`.
    pub factor_sqrt: bool,
}

impl CoefficientEstimate {
    pub fn dim(&self) -> usize {
        self.mu_hat.len()
    }
}

/// `G G^T` for a row-major `d x d` factor.
pub fn gram(g: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            s[a * d + b] = (0..d).map(|k| g[a * d + k] * g[b * d + k]).sum();
        }
    }
    s
}

fn clamp(v: &mut [f64], k: f64) -> bool {
    let mut hit = false;
    for x in v.iter_mut() {
        if x.abs() > k {
            *x = x.clamp(-k, k);
            hit = true;
        }
    }
    hit
}

/// Clamps `mu_hat` and `Sigma_hat` entrywise to `[-K, K]`.
///
/// The square root is recomputed from the clamped `Sigma_hat` when clamping was active.
pub fn truncate(mut est: CoefficientEstimate, k: f64) -> Result<CoefficientEstimate> {
    if !(k > 0.0) {
        return Err(Error::config("truncation_level", "must be positive"));
    }
    let d = est.dim();
    est.truncation_level = k;
    est.truncated_mu = clamp(&mut est.mu_hat, k) || est.truncated_mu;
    if clamp(&mut est.sigma_hat, k) {
        est.truncated_sigma = true;
        let (root, clamped) = psd_sqrt(&est.sigma_hat, d)?;
        est.sqrt_sigma = root;
        est.clamped_eigenvalues = clamped;
        est.factor_sqrt = false;
    }
    Ok(est)
}

/// Symmetric PSD square root `V diag(sqrt(max(lambda, 0))) V^T` and the
/// number of clamped eigenvalues.
pub fn psd_sqrt(s: &[f64], d: usize) -> Result<(Vec<f64>, usize)> {
    if s.len() != d * d {
        return Err(Error::Shape(format!("expected {} entries, got {}", d * d, s.len())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::EstimationDomain("non-finite diffusion matrix".into()));
    }
    let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let m = DMatrix::from_row_slice(d, d, s);
    let asym = (&m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::EstimationDomain(format!("diffusion matrix is not symmetric (asymmetry {asym:e})")));
    }
    if d == 1 {
        return Ok((vec![s[0].max(0.0).sqrt()], usize::from(s[0] < 0.0)));
    }
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let mut out = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            out[a * d + b] = r[(a, b)];
        }
    }
    Ok((out, clamped))
}

/// Baseline estimate from the conditional expectations `Delta` after an observation:
/// `mu_hat = (G_{t,Delta} - x_t) / Delta` and `Sigma_hat = S_{t,Delta} / Delta`,
/// where `x_t` is the observed value (or `G_{t,0}`) and `S = G2 G2^T`.
pub fn estimate_baseline(x_t: &[f64], g1_delta: &[f64], g2_delta: &[f64], delta: f64, k: f64) -> Result<CoefficientEstimate> {
    if !(delta > 0.0) {
        return Err(Error::config("delta", "must be positive"));
    }
    let d = x_t.len();
    check_lengths(d, g1_delta, g2_delta)?;
    let mu_hat = g1_delta.iter().zip(x_t).map(|(g, x)| (g - x) / delta).collect();
    let sigma_hat: Vec<f64> = gram(g2_delta, d).into_iter().map(|v| v / delta).collect();
    let (sqrt_sigma, clamped) = psd_sqrt(&sigma_hat, d)?;
    let est = CoefficientEstimate {
        mu_hat,
        sigma_hat,
        sqrt_sigma,
        truncation_level: f64::INFINITY,
        truncated_mu: false,
        truncated_sigma: false,
        clamped_eigenvalues: clamped,
        factor_sqrt: false,
    };
    truncate(est, k)
}

/// Instantaneous estimate: `mu_hat = G1` and `Sigma_hat = G2 G2^T`, read out
/// right after an observation. `G2` serves as the square root.
pub fn estimate_instant(g1: &[f64], g2: &[f64], k: f64) -> Result<CoefficientEstimate> {
    let d = g1.len();
    check_lengths(d, g1, g2)?;
    if g1.iter().chain(g2).any(|v| !v.is_finite()) {
        return Err(Error::EstimationDomain("non-finite model output".into()));
    }
    let est = CoefficientEstimate {
        mu_hat: g1.to_vec(),
        sigma_hat: gram(g2, d),
        sqrt_sigma: g2.to_vec(),
        truncation_level: f64::INFINITY,
        truncated_mu: false,
        truncated_sigma: false,
        clamped_eigenvalues: 0,
        factor_sqrt: true,
    };
    truncate(est, k)
}

fn check_lengths(d: usize, g1: &[f64], g2: &[f64]) -> Result<()> {
    if g1.len() != d || g2.len() != d * d {
        return Err(Error::Shape(format!("need {d} drift and {} diffusion entries", d * d)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psd_sqrt_by_hand() {
        let (r, c) = psd_sqrt(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(c, 0);
        for (a, b) in r.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let (r, _) = psd_sqrt(&[4.0, 0.0, 0.0, 9.0], 2).unwrap();
        for (a, b) in r.iter().zip([2.0, 0.0, 0.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let (r, _) = psd_sqrt(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        for v in r {
            assert_abs_diff_eq!(v, h, epsilon = 1e-14);
        }
    }

    #[test]
    fn psd_sqrt_clamps_negative_modes() {
        // eigenvalues 3 and -1
        let (r, c) = psd_sqrt(&[1.0, 2.0, 2.0, 1.0], 2).unwrap();
        assert_eq!(c, 1);
        let s = gram(&r, 2);
        for (a, b) in s.iter().zip([1.5, 1.5, 1.5, 1.5]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(psd_sqrt(&[1.0, 2.0, 0.0, 1.0], 2).is_err());
    }

    #[test]
    fn truncation() {
        let e = estimate_instant(&[15.0], &[1.0], 10.0).unwrap();
        assert_eq!(e.mu_hat, vec![10.0]);
        assert!(e.truncated_mu && !e.truncated_sigma && e.factor_sqrt);
        let e = estimate_instant(&[1.0], &[0.5], 10.0).unwrap();
        assert!(!e.truncated_mu && !e.truncated_sigma);
        assert_eq!(e.sigma_hat, vec![0.25]);
        let e = estimate_instant(&[1.0, 0.0], &[4.0, 0.0, 3.0, 1.0], 10.0).unwrap();
        assert!(e.truncated_sigma && !e.factor_sqrt);
        assert_eq!(e.sigma_hat, vec![10.0, 10.0, 10.0, 10.0]);
        assert!(truncate(e, 0.0).is_err());
    }

    #[test]
    fn zero_outputs_give_zero_estimates() {
        let e = estimate_instant(&[0.0], &[0.0], 1.0).unwrap();
        assert_eq!((e.mu_hat[0], e.sigma_hat[0]), (0.0, 0.0));
        let e = estimate_baseline(&[1.0], &[1.0], &[0.0], 0.01, 1.0).unwrap();
        assert_eq!((e.mu_hat[0], e.sigma_hat[0]), (0.0, 0.0));
        assert!(estimate_baseline(&[1.0], &[1.0], &[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn gbm_conditional_moment_oracle() {
        let (mu, sigma, delta) = (2.0f64, 0.3f64, 0.01f64);
        let g1 = (mu * delta).exp();
        let second = ((2.0 * mu + sigma * sigma) * delta).exp() - 2.0 * (mu * delta).exp() + 1.0;
        let e = estimate_baseline(&[1.0], &[g1], &[second.sqrt()], delta, 1e3).unwrap();
        assert_abs_diff_eq!(e.mu_hat[0], 2.0201340026755776, epsilon = 1e-12);
        assert_abs_diff_eq!(e.sigma_hat[0], 0.1345, epsilon = 5e-4);
        assert!(e.sigma_hat[0] > 0.09);
    }

    #[test]
    fn baseline_drift_converges_linearly() {
        let errs: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&delta: &f64| {
                let e = estimate_baseline(&[1.0], &[(2.0 * delta).exp()], &[0.0], delta, 1e3).unwrap();
                (e.mu_hat[0] - 2.0).abs()
            })
            .collect();
        assert!((errs[0] / errs[1] - 2.0).abs() < 0.05 && (errs[1] / errs[2] - 2.0).abs() < 0.05, "{errs:?}");
    }
}
