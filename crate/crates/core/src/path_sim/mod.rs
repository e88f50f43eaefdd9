//! Synthetic Itô-process datasets and the random observation framework.

mod dataset;
mod exact;
pub mod io;
mod observation;
mod sde;

pub use dataset::{simulate, simulate_sde, split, split_indices, Grid, PathDataset};
pub use exact::simulate_exact;
pub use observation::{observe, observe_all, observe_with, ObservationScheme, ObservationSequence};
pub use sde::{Sde, SdeKind, SdeSpec};

#[cfg(test)]
mod moment_tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gbm_euler_moments() {
        let n = 20000;
        let ds = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, n, 42).unwrap();
        for &k in &[50usize, 100] {
            let t = k as f64 * 0.01;
            let xs = ds.marginal(k, 0);
            let (m, v) = mean_var(&xs);
            let true_mean = (2.0 * t).exp();
            let true_var = (4.0 * t).exp() * ((0.09 * t).exp() - 1.0);
            let se_mean = (v / n as f64).sqrt();
            // Euler's (1 + mu dt)^k undershoots e^{mu t}; allow for that bias too
            let euler_mean = (1.0f64 + 0.02).powi(k as i32);
            assert!((m - euler_mean).abs() < 4.0 * se_mean, "t={t} mean {m} vs euler {euler_mean}");
            assert!((m - true_mean).abs() < 4.0 * se_mean + (true_mean - euler_mean), "t={t} mean {m}");
            // standard error of the sample variance, via the fourth moment
            let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
            let se_var = ((m4 - v * v) / n as f64).sqrt();
            let euler_var = ((1.02f64).powi(2) + 0.09 * 0.01).powi(k as i32) - euler_mean.powi(2);
            assert!((v - euler_var).abs() < 4.0 * se_var, "t={t} var {v} vs {euler_var}");
            assert!((v - true_var).abs() < 4.0 * se_var + (true_var - euler_var).abs(), "t={t} var {v}");
        }
        // 3-standard-error band at T, centred on the Euler mean (e^2 sits about 9 standard errors away)
        let (m, v) = mean_var(&ds.marginal(100, 0));
        assert!((m - 1.02f64.powi(100)).abs() < 3.0 * (v / n as f64).sqrt() + 1e-12);
    }

    #[test]
    fn ou_euler_mean() {
        let n = 10000;
        let (kappa, theta, x0) = (2.0, 3.0, 1.0);
        let ds = simulate(&SdeSpec::ou(kappa, theta, 1.0, x0), 1.0, 0.01, n, 8).unwrap();
        for &k in &[25usize, 50, 100] {
            let t = k as f64 * 0.01;
            let (m, v) = mean_var(&ds.marginal(k, 0));
            let exact = theta + (x0 - theta) * (-kappa * t).exp();
            let tol = 4.0 * (v / n as f64).sqrt() + 0.01 * (theta - x0).abs();
            assert!((m - exact).abs() < tol, "t={t}: {m} vs {exact}");
        }
    }

    #[test]
    fn exact_sampler_gbm_mean() {
        let n = 20000;
        let ds = simulate_exact(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, n, 1).unwrap();
        let (m, v) = mean_var(&ds.marginal(100, 0));
        assert!((m - 2f64.exp()).abs() < 4.0 * (v / n as f64).sqrt());
    }
}
