//! Training targets and loss functions for the four estimation schemes.
//!
//! * `Base`: `G1` learns `X`, `S = G2 G2^T` learns the squared increments `Z`, both with `Psi`.
//! * `JointBase`: one model; the diffusion target is the increment centred at the
//!   model's own prediction `G1_{t-}`.
//! * `Instant`: `G1` learns the increment quotient `X^IQ`, `S` the quadratic
//!   quotient `Z^Q`, both with the noise-adapted loss (left limits only).
//! * `JointInstant`: one model; the diffusion target is
//!   `(t - tau) (X^IQ - G1_{t-}) (X^IQ - G1_{t-})^T`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mat, Tape, Var};
use crate::path_sim::ObservationSequence;

/// Elapsed times below this are excluded from quotient targets.
pub const MIN_ELAPSED: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Base,
    JointBase,
    Instant,
    JointInstant,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Base, Scheme::JointBase, Scheme::Instant, Scheme::JointInstant];

    pub fn is_joint(self) -> bool {
        matches!(self, Scheme::JointBase | Scheme::JointInstant)
    }

    pub fn is_instant(self) -> bool {
        matches!(self, Scheme::Instant | Scheme::JointInstant)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Base => "base",
            Scheme::JointBase => "joint-base",
            Scheme::Instant => "instant",
            Scheme::JointInstant => "joint-instant",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Base => "Base",
            Scheme::JointBase => "Joint Base",
            Scheme::Instant => "Instant",
            Scheme::JointInstant => "Joint Instant",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::config("scheme", format!("unknown scheme '{s}'")))
    }
}

/// Targets at the observation times `t_1, ..., t_n` of a batch of histories.
///
/// Rows follow the event order of [`crate::njode::record_batch`]: grid index
/// first, history second. Matrices with `d x d` columns are row-major flattened.
#[derive(Debug, Clone)]
pub struct TargetBatch {
    pub scheme: Scheme,
    pub dim: usize,
    pub events: Vec<(usize, usize)>,
    /// Observations after `t_0`, per history.
    pub n_obs: Vec<usize>,
    /// `1 / (n_p * #valid histories)` per event.
    pub weights: Vec<f64>,
    /// Observed `X_{t_i}` (`0` where masked); target of `G1` before and after the jump.
    pub x: Mat,
    pub mask: Mat,
    /// `X_{t_i} - X_{tau}` per coordinate, using the last time that coordinate was seen.
    pub increment: Mat,
    /// `t_i - tau` per coordinate.
    pub elapsed: Mat,
    /// `X^IQ_{t_i-}`.
    pub xiq: Mat,
    /// `mask` restricted to admissible elapsed times.
    pub quotient_mask: Mat,
    /// `Z_{t_i-}`.
    pub z: Mat,
    /// `Z_{t_i}`, identically `0`.
    pub z_post: Mat,
    pub z_mask: Mat,
    /// `Z^Q_{t_i-}`.
    pub zq: Mat,
    pub zq_mask: Mat,
    /// Histories without observations after `t_0`.
    pub excluded_paths: usize,
    /// Quotient entries dropped for a degenerate elapsed time.
    pub excluded_quotients: usize,
}

impl TargetBatch {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Largest absolute entry of `Z^Q` over admissible entries.
    pub fn max_abs_zq(&self) -> f64 {
        self.zq.iter().zip(&self.zq_mask).filter(|(_, &m)| m > 0.0).map(|(v, _)| v.abs()).fold(0.0, f64::max)
    }
}

pub fn build_targets(seqs: &[&ObservationSequence], scheme: Scheme) -> Result<TargetBatch> {
    let d = seqs.first().map(|s| s.dim).ok_or_else(|| Error::Data("empty batch".into()))?;
    if seqs.iter().any(|s| s.dim != d) {
        return Err(Error::Shape("histories differ in dimension".into()));
    }
    let mut order: Vec<(usize, usize, usize)> = Vec::new();
    for (r, s) in seqs.iter().enumerate() {
        s.validate()?;
        for k in 1..s.len() {
            order.push((s.indices[k], r, k));
        }
    }
    order.sort_unstable();
    let n_obs: Vec<usize> = seqs.iter().map(|s| s.len() - 1).collect();
    let valid = n_obs.iter().filter(|&&n| n > 0).count();
    let e = order.len();
    let dd = d * d;
    let mut t = TargetBatch {
        scheme,
        dim: d,
        events: order.iter().map(|&(_, r, k)| (r, k)).collect(),
        weights: order.iter().map(|&(_, r, _)| 1.0 / (n_obs[r] as f64 * valid as f64)).collect(),
        n_obs: n_obs.clone(),
        x: Array2::zeros((e, d)),
        mask: Array2::zeros((e, d)),
        increment: Array2::zeros((e, d)),
        elapsed: Array2::zeros((e, d)),
        xiq: Array2::zeros((e, d)),
        quotient_mask: Array2::zeros((e, d)),
        z: Array2::zeros((e, dd)),
        z_post: Array2::zeros((e, dd)),
        z_mask: Array2::zeros((e, dd)),
        zq: Array2::zeros((e, dd)),
        zq_mask: Array2::zeros((e, dd)),
        excluded_paths: seqs.len() - valid,
        excluded_quotients: 0,
    };
    for (row, &(_, r, k)) in order.iter().enumerate() {
        let s = seqs[r];
        let t_i = s.time(k);
        let last = s.last_observed(k - 1);
        // time each coordinate was last seen before t_i
        let mut seen = vec![0.0; d];
        for j in 0..k {
            for c in 0..d {
                if s.mask(j)[c] {
                    seen[c] = s.time(j);
                }
            }
        }
        for c in 0..d {
            let m = if s.mask(k)[c] { 1.0 } else { 0.0 };
            let x = s.value(k)[c];
            let inc = if m > 0.0 { x - last[c] } else { 0.0 };
            let dt = t_i - seen[c];
            t.x[[row, c]] = x;
            t.mask[[row, c]] = m;
            t.increment[[row, c]] = inc;
            t.elapsed[[row, c]] = dt;
            if m > 0.0 && dt >= MIN_ELAPSED {
                t.xiq[[row, c]] = inc / dt;
                t.quotient_mask[[row, c]] = 1.0;
            } else if m > 0.0 {
                t.excluded_quotients += 1;
            }
        }
        for a in 0..d {
            for b in 0..d {
                let i = a * d + b;
                t.z[[row, i]] = t.increment[[row, a]] * t.increment[[row, b]];
                t.z_mask[[row, i]] = t.mask[[row, a]] * t.mask[[row, b]];
                t.zq_mask[[row, i]] = t.quotient_mask[[row, a]] * t.quotient_mask[[row, b]];
                if t.zq_mask[[row, i]] > 0.0 {
                    let span = if a == b { t.elapsed[[row, a]] } else { (t.elapsed[[row, a]] * t.elapsed[[row, b]]).sqrt() };
                    t.zq[[row, i]] = t.z[[row, i]] / span;
                }
            }
        }
    }
    Ok(t)
}

/// `Psi`: weighted sum over events of `(|M (V_t - eta_t)| + |M (V_{t-} - eta_{t-})|)^2`.
pub fn psi(tape: &mut Tape, target_post: Var, target_pre: Var, out_post: Var, out_pre: Var, mask: Var, weights: &[f64]) -> Result<Var> {
    let e_post = tape.sub(out_post, target_post)?;
    let e_post = tape.mul(e_post, mask)?;
    let e_pre = tape.sub(out_pre, target_pre)?;
    let e_pre = tape.mul(e_pre, mask)?;
    let n_post = tape.row_norm(e_post);
    let n_pre = tape.row_norm(e_pre);
    let n = tape.add(n_post, n_pre)?;
    let sq = tape.square(n);
    tape.weighted_sum(sq, weights)
}

/// Noise-adapted loss: weighted sum over events of `|M (V_{t-} - eta_{t-})|^2`.
pub fn psi_noisy(tape: &mut Tape, target_pre: Var, out_pre: Var, mask: Var, weights: &[f64]) -> Result<Var> {
    let e = tape.sub(out_pre, target_pre)?;
    let e = tape.mul(e, mask)?;
    let sq = tape.square(e);
    tape.weighted_sum(sq, weights)
}

/// [`psi`] on plain matrices.
pub fn loss_psi(target_post: &Mat, target_pre: &Mat, out_post: &Mat, out_pre: &Mat, mask: &Mat, weights: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let v: Vec<Var> = [target_post, target_pre, out_post, out_pre, mask].iter().map(|m| tape.constant((*m).clone())).collect();
    let out = psi(&mut tape, v[0], v[1], v[2], v[3], v[4], weights)?;
    Ok(tape.scalar(out))
}

/// [`psi_noisy`] on plain matrices.
pub fn loss_psi_noisy(target_pre: &Mat, out_pre: &Mat, mask: &Mat, weights: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let v: Vec<Var> = [target_pre, out_pre, mask].iter().map(|m| tape.constant((*m).clone())).collect();
    let out = psi_noisy(&mut tape, v[0], v[1], v[2], weights)?;
    Ok(tape.scalar(out))
}

/// Model outputs at the observation events of a batch.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutputs {
    /// `G1` at `t_i-` and `t_i`.
    pub drift_pre: Var,
    pub drift_post: Var,
    /// `G2` (the factor, not `S`) at `t_i-` and `t_i`.
    pub diffusion_pre: Var,
    pub diffusion_post: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub drift: Var,
    pub diffusion: Var,
    pub total: Var,
}

/// Drift and diffusion losses of `targets.scheme`, summed with unit weights.
///
/// With `stop_gradient` the model's `G1` enters the bias-corrected diffusion
/// targets as a constant.
pub fn joint_loss(tape: &mut Tape, targets: &TargetBatch, heads: HeadOutputs, stop_gradient: bool) -> Result<LossParts> {
    let d = targets.dim;
    let e = targets.len();
    for (v, w) in [(heads.drift_pre, d), (heads.drift_post, d), (heads.diffusion_pre, d * d), (heads.diffusion_post, d * d)] {
        if tape.value(v).dim() != (e, w) {
            return Err(Error::Shape(format!("head output {:?} does not match {e} events x {w}", tape.value(v).dim())));
        }
    }
    let w = &targets.weights;
    let s_pre = tape.gram(heads.diffusion_pre, d, d)?;
    let s_post = tape.gram(heads.diffusion_post, d, d)?;
    let drift_in = if stop_gradient { tape.detach(heads.drift_pre) } else { heads.drift_pre };

    let (drift, diffusion) = match targets.scheme {
        Scheme::Base | Scheme::JointBase => {
            let x = tape.constant(targets.x.clone());
            let mask = tape.constant(targets.mask.clone());
            let drift = psi(tape, x, x, heads.drift_post, heads.drift_pre, mask, w)?;
            let z_pre = if targets.scheme == Scheme::Base {
                tape.constant(targets.z.clone())
            } else {
                let centred = tape.sub(x, drift_in)?;
                let centred = tape.mul(centred, mask)?;
                tape.gram(centred, d, 1)?
            };
            let zero = tape.constant(targets.z_post.clone());
            let z_mask = tape.constant(targets.z_mask.clone());
            let diffusion = psi(tape, zero, z_pre, s_post, s_pre, z_mask, w)?;
            (drift, diffusion)
        }
        Scheme::Instant | Scheme::JointInstant => {
            let xiq = tape.constant(targets.xiq.clone());
            let qmask = tape.constant(targets.quotient_mask.clone());
            let drift = psi_noisy(tape, xiq, heads.drift_pre, qmask, w)?;
            let zq_pre = if targets.scheme == Scheme::Instant {
                tape.constant(targets.zq.clone())
            } else {
                let centred = tape.sub(xiq, drift_in)?;
                let centred = tape.mul(centred, qmask)?;
                let root = tape.constant(targets.elapsed.mapv(|v| v.max(0.0).sqrt()));
                let scaled = tape.mul(centred, root)?;
                tape.gram(scaled, d, 1)?
            };
            let zq_mask = tape.constant(targets.zq_mask.clone());
            let diffusion = psi_noisy(tape, zq_pre, s_pre, zq_mask, w)?;
            (drift, diffusion)
        }
    };
    let total = tape.add(drift, diffusion)?;
    Ok(LossParts { drift, diffusion, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_sim::Grid;
    use ndarray::array;

    fn two_point() -> ObservationSequence {
        let grid = Grid::new(1.0, 0.5).unwrap();
        let mut s = ObservationSequence::new(grid, &[1.0]);
        s.push(1, &[2.0], &[true]).unwrap();
        s
    }

    #[test]
    fn quotient_targets_by_hand() {
        let s = two_point();
        let t = build_targets(&[&s], Scheme::Instant).unwrap();
        assert_eq!(t.xiq, array![[2.0]]);
        assert_eq!(t.zq, array![[2.0]]);
        assert_eq!(t.z, array![[1.0]]);
        assert_eq!(t.weights, vec![1.0]);
    }

    #[test]
    fn constant_path_has_zero_squared_targets() {
        let grid = Grid::new(1.0, 0.1).unwrap();
        let mut s = ObservationSequence::new(grid, &[3.0]);
        for k in [2, 5, 9] {
            s.push(k, &[3.0], &[true]).unwrap();
        }
        let t = build_targets(&[&s], Scheme::Base).unwrap();
        assert!(t.z.iter().chain(t.zq.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn psi_by_hand() {
        // one event: post-jump error 0.3, pre-jump error 0.4
        let l = loss_psi(&array![[0.0]], &array![[0.0]], &array![[0.3]], &array![[-0.4]], &array![[1.0]], &[1.0]).unwrap();
        assert!((l - 0.49).abs() < 1e-15);
        let l = loss_psi_noisy(&array![[1.0]], &array![[1.5]], &array![[1.0]], &[1.0]).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        // masked coordinate contributes nothing
        let l = loss_psi(
            &array![[0.0, 0.0]],
            &array![[0.0, 0.0]],
            &array![[0.3, 100.0]],
            &array![[0.4, -7.0]],
            &array![[1.0, 0.0]],
            &[1.0],
        )
        .unwrap();
        assert!((l - 0.49).abs() < 1e-15);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("nope".parse::<Scheme>().is_err());
    }
}
