//! Turn network outputs into drift and diffusion estimates, with truncation
//! and the positive semi-definite square root.

use itogen::estimators::{estimate_baseline, estimate_instant, psd_sqrt};

fn main() -> itogen::Result<()> {
    // Exact one-step conditional moments of GBM(mu = 2, sigma = 0.3) from x = 1 over delta = 0.01.
    let (mu, sigma, x, delta) = (2.0f64, 0.3f64, 1.0f64, 0.01f64);
    let mean = x * (mu * delta).exp();
    let var = x * x * (2.0 * mu * delta).exp() * ((sigma * sigma * delta).exp() - 1.0);
    let second = var + (mean - x).powi(2);
    let base = estimate_baseline(&[x], &[mean], &[second.sqrt()], delta, 100.0)?;
    println!("baseline: mu_hat {:.4}, Sigma_hat {:.5} (true 2, 0.09)", base.mu_hat[0], base.sigma_hat[0]);

    let inst = estimate_instant(&[2.0], &[0.3], 100.0)?;
    println!("instantaneous: mu_hat {:.4}, Sigma_hat {:.5}", inst.mu_hat[0], inst.sigma_hat[0]);

    let clipped = estimate_instant(&[50.0, -0.5], &[3.0, 0.0, 0.0, 1.0], 10.0)?;
    println!("truncated at K = 10: mu {:?} (clipped {}), Sigma {:?}", clipped.mu_hat, clipped.truncated_mu, clipped.sigma_hat);

    let (root, clamped) = psd_sqrt(&[1.0, 2.0, 2.0, 1.0], 2)?;
    println!("sqrt of an indefinite matrix: {root:?}, {clamped} eigenvalue(s) clamped to 0");
    Ok(())
}
