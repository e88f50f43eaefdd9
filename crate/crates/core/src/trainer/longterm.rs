use rand::Rng;

use crate::path_sim::ObservationSequence;
use crate::rng::{self, Domain};

/// Thins dense histories to create long prediction windows.
///
/// Every observation after `t_0` is kept with probability `p_keep`. Histories
/// whose observation density is already at most `p_keep` pass through unchanged.
/// History `i` draws from stream `stream + i`.
pub fn augment_longterm(batch: &[&ObservationSequence], p_keep: f64, seed: u64, stream: u64) -> Vec<ObservationSequence> {
    batch
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let density = (seq.len() - 1) as f64 / seq.grid.n_steps.max(1) as f64;
            if p_keep >= 1.0 || density <= p_keep {
                return (*seq).clone();
            }
            let mut r = rng::stream(seed, Domain::LongTerm, stream.wrapping_add(i as u64));
            let mut out = ObservationSequence::new(seq.grid, seq.value(0));
            for k in 1..seq.len() {
                if r.random::<f64>() < p_keep {
                    out.push(seq.indices[k], seq.value(k), seq.mask(k)).expect("subsequence of a valid history");
                }
            }
            out
        })
        .collect()
}
