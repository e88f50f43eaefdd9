//! Continue one observed history from t = 0.55 with many generated futures.

use itogen::generator::{generate_continuations, Estimator, GbmOracle};
use itogen::path_sim::{observe, simulate, SdeSpec};

fn main() -> itogen::Result<()> {
    let ds = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, 1, 11)?;
    let history = observe(&ds, 0.1, 11)?.remove(0);
    let oracle = GbmOracle { mu: 2.0, sigma: 0.3 };
    let run = generate_continuations(Estimator::Oracle(&oracle), &history, 0.55, 1000, 0.01, Some(100.0), 5)?;

    let last = history.kappa_index(55) - 1;
    let x_bar = history.value(last)[0];
    let t_bar = history.time(last);
    let end = run.dataset.marginal(run.dataset.grid.n_steps, 0);
    let mean = end.iter().sum::<f64>() / end.len() as f64;
    println!("last observation before 0.55: X({t_bar:.2}) = {x_bar:.4}; generation starts at {:.2}", run.meta.start);
    println!("E[X_1 | history] generated {mean:.4}, closed form {:.4}", x_bar * (2.0 * (1.0 - t_bar)).exp());
    Ok(())
}
