//! Build the training targets of every scheme for a few observed paths and
//! evaluate the loss of a constant prediction.

use itogen::losses::{build_targets, loss_psi_noisy, Scheme};
use itogen::path_sim::{observe, simulate, SdeSpec};
use ndarray::Array2;

fn main() -> itogen::Result<()> {
    let ds = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, 200, 5)?;
    let obs = observe(&ds, 0.1, 5)?;
    let refs: Vec<_> = obs.iter().collect();
    for scheme in Scheme::ALL {
        let t = build_targets(&refs, scheme)?;
        let mean = |m: &Array2<f64>| m.sum() / m.len().max(1) as f64;
        let (drift, diffusion) = if scheme.is_instant() { (&t.xiq, &t.zq) } else { (&t.x, &t.z) };
        print!("{:<14} {} events, mean drift target {:.4}, mean diffusion target {:.4}", scheme.label(), t.len(), mean(drift), mean(diffusion));
        if scheme.is_instant() {
            // The best constant drift under the noise-adapted loss is the target mean.
            let guess = Array2::from_elem(t.xiq.dim(), mean(&t.xiq));
            let loss = loss_psi_noisy(&t.xiq, &guess, &t.quotient_mask, &t.weights)?;
            print!(", loss of constant drift {loss:.4}");
        }
        println!();
    }
    Ok(())
}
