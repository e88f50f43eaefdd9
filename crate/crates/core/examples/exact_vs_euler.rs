//! Compare Euler-Maruyama paths with exact transition sampling.
//!
//! The terminal means should agree with the closed forms up to the Euler bias.

use itogen::path_sim::{simulate, simulate_exact, SdeSpec};

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn main() -> itogen::Result<()> {
    let cases = [
        ("GBM", SdeSpec::gbm(2.0, 0.3, 1.0), 2f64.exp()),
        ("OU", SdeSpec::ou(2.0, 3.0, 1.0, 1.0), 3.0 - 2.0 * (-2f64).exp()),
    ];
    for (name, spec, closed_form) in cases {
        let euler = simulate(&spec, 1.0, 0.01, 20000, 1)?;
        let exact = simulate_exact(&spec, 1.0, 0.01, 20000, 1)?;
        let (me, se) = mean_sd(&euler.marginal(100, 0));
        let (mx, sx) = mean_sd(&exact.marginal(100, 0));
        println!("{name}: E[X_1] closed form {closed_form:.4} | euler {me:.4} (sd {se:.4}) | exact {mx:.4} (sd {sx:.4})");
    }
    Ok(())
}
