//! Generate paths from the true coefficients and check the sample statistics.

use itogen::eval::{estimate_gbm, estimate_ou};
use itogen::generator::{generate, Estimator, GbmOracle, GenerationConfig, OuOracle};
use itogen::path_sim::Grid;

fn main() -> itogen::Result<()> {
    let grid = Grid::new(1.0, 0.01)?;
    let config = GenerationConfig { n_paths: 5000, seed: 1, truncation_level: Some(100.0), ..GenerationConfig::default() };

    let gbm = GbmOracle { mu: 2.0, sigma: 0.3 };
    let run = generate(Estimator::Oracle(&gbm), grid, &[1.0], &config)?;
    let est = estimate_gbm(&run.dataset)?;
    println!("GBM oracle: mu {:.4}, sigma {:.4}, diverged {}", est.mu, est.sigma, run.meta.n_diverged);

    let ou = OuOracle { kappa: 2.0, theta: 3.0, sigma: 1.0 };
    let run = generate(Estimator::Oracle(&ou), grid, &[1.0], &config)?;
    let est = estimate_ou(&run.dataset)?;
    println!("OU oracle: kappa {:.4}, theta {:.4}, sigma {:.4}", est.kappa, est.theta, est.sigma);
    Ok(())
}
