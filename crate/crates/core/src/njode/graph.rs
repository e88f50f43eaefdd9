use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::model::{obs_input, time_features, NjodeParams};
use super::runner::concat;
use crate::error::{Error, Result};
use crate::nn::{MlpParams, Tape, Var};
use crate::path_sim::ObservationSequence;

/// Recorded outputs of a mini-batch at its observation times.
#[derive(Debug, Clone)]
pub struct BatchOutputs {
    /// `(row, observation number)` of every recorded jump, ordered by grid
    /// index first and row second. Observation `0` (`t_0`) is never recorded.
    pub events: Vec<(usize, usize)>,
    /// Left limits `G_{t_i-}`, one row per event.
    pub pre: Var,
    /// Post-jump outputs `G_{t_i}`, one row per event.
    pub post: Var,
}

struct Recorder<'a, 'r> {
    tape: &'a mut Tape,
    dropout: Option<(f64, &'r mut ChaCha8Rng)>,
}

impl Recorder<'_, '_> {
    fn call(&mut self, net: &MlpParams, vars: &[Var], x: Var) -> Result<Var> {
        match &mut self.dropout {
            None => net.forward_tape(self.tape, vars, x, None),
            Some((rate, rng)) => {
                let rows = self.tape.value(x).nrows();
                let masks = net.dropout_masks(rows, *rate, *rng);
                net.forward_tape(self.tape, vars, x, Some(&masks))
            }
        }
    }
}

/// Records the forward pass of `params` over a mini-batch of histories on `tape`.
///
/// `vars` are tape leaves for [`NjodeParams::tensors`]. All histories must
/// share one grid. Returns `None` when no history has an observation after `t_0`.
pub fn record_batch(
    tape: &mut Tape,
    vars: &[Var],
    params: &NjodeParams,
    seqs: &[&ObservationSequence],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<Option<BatchOutputs>> {
    let arch = &params.arch;
    let Some(first) = seqs.first() else {
        return Ok(None);
    };
    let grid = first.grid;
    let d = arch.dim;
    if seqs.iter().any(|s| s.grid != grid || s.dim != d) {
        return Err(Error::Shape("histories in a batch must share grid and dimension".into()));
    }
    let [ne, nf, _] = params.n_tensors();
    let (enc_vars, rest) = vars.split_at(ne);
    let (field_vars, dec_vars) = rest.split_at(nf);
    let mut rec = Recorder { tape, dropout };

    let b = seqs.len();
    let mut x_last = Array2::from_shape_fn((b, d), |(r, c)| seqs[r].value(0)[c]);
    let mut u_last = obs_input(arch, &x_last, &Array2::ones((b, d)));
    let mut tau = vec![0.0; b];
    let zeros = vec![0.0; b];
    let mut parts = vec![u_last.clone(), time_features(&zeros, &zeros)];
    if arch.recurrent_encoder {
        parts.push(Array2::zeros((b, arch.latent_dim)));
    }
    let enc_in = rec.tape.constant(concat(&parts));
    let mut h = rec.call(&params.encoder, enc_vars, enc_in)?;

    let last_index = seqs.iter().map(|s| *s.indices.last().expect("t_0 present")).max().unwrap_or(0);
    let mut next = vec![1usize; b];
    let n_sub = arch.ode_substeps;
    let h_sub = grid.dt / n_sub as f64;
    let mut events = Vec::new();
    let mut pre_parts = Vec::new();
    let mut post_parts = Vec::new();

    for k in 1..=last_index {
        for sub in 0..n_sub {
            let t = grid.time(k - 1) + sub as f64 * h_sub;
            let since: Vec<f64> = tau.iter().map(|tau| t - tau).collect();
            let feats = rec.tape.constant(concat(&[u_last.clone(), time_features(&tau, &since)]));
            let input = rec.tape.concat(&[h, feats])?;
            let f = rec.call(&params.field, field_vars, input)?;
            h = rec.tape.add_scaled(h, f, h_sub)?;
        }
        let rows: Vec<usize> = (0..b).filter(|&r| seqs[r].indices.get(next[r]) == Some(&k)).collect();
        if rows.is_empty() {
            continue;
        }
        let t = grid.time(k);
        let h_obs = rec.tape.gather_rows(h, &rows);
        pre_parts.push(rec.call(&params.decoder, dec_vars, h_obs)?);

        let mut x = Array2::zeros((rows.len(), d));
        let mut m = Array2::zeros((rows.len(), d));
        for (i, &r) in rows.iter().enumerate() {
            let (val, mask) = (seqs[r].value(next[r]), seqs[r].mask(next[r]));
            for c in 0..d {
                if mask[c] {
                    x_last[[r, c]] = val[c];
                    m[[i, c]] = 1.0;
                }
                x[[i, c]] = x_last[[r, c]];
            }
        }
        let u = obs_input(arch, &x, &m);
        let ts = vec![t; rows.len()];
        let since: Vec<f64> = rows.iter().map(|&r| t - tau[r]).collect();
        let feats = rec.tape.constant(concat(&[u.clone(), time_features(&ts, &since)]));
        let enc_in = if arch.recurrent_encoder { rec.tape.concat(&[feats, h_obs])? } else { feats };
        let h_new = rec.call(&params.encoder, enc_vars, enc_in)?;
        h = rec.tape.scatter_rows(h, &rows, h_new)?;
        post_parts.push(rec.call(&params.decoder, dec_vars, h_new)?);

        for (i, &r) in rows.iter().enumerate() {
            u_last.row_mut(r).assign(&u.row(i));
            tau[r] = t;
            events.push((r, next[r]));
            next[r] += 1;
        }
    }
    if events.is_empty() {
        return Ok(None);
    }
    let pre = rec.tape.stack_rows(&pre_parts)?;
    let post = rec.tape.stack_rows(&post_parts)?;
    Ok(Some(BatchOutputs { events, pre, post }))
}
