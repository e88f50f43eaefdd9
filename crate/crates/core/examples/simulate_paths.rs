//! Simulate GBM and OU paths, draw Bernoulli observation times and write both to disk.
//!
//! `cargo run --release --example simulate_paths -- /tmp/itogen-sim`

use itogen::path_sim::io::{read_dataset, write_dataset};
use itogen::path_sim::{observe, simulate, SdeSpec};

fn main() -> itogen::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("itogen-sim").display().to_string());
    for (name, spec) in [("gbm", SdeSpec::gbm(2.0, 0.3, 1.0)), ("ou", SdeSpec::ou(2.0, 3.0, 1.0, 1.0))] {
        let ds = simulate(&spec, 1.0, 0.01, 1000, 42)?;
        let obs = observe(&ds, 0.1, 42)?;
        let dir = std::path::Path::new(&out).join(name);
        write_dataset(&dir, &ds, Some(&obs), Some((0.1, 42)))?;

        let (back, back_obs) = read_dataset(&dir)?;
        let n_obs: usize = back_obs.as_ref().map(|o| o.iter().map(|s| s.len()).sum()).unwrap_or(0);
        let end = back.marginal(back.grid.n_steps, 0);
        let mean = end.iter().sum::<f64>() / end.len() as f64;
        println!(
            "{name}: {} paths x {} points, {n_obs} observations ({:.1} per path), mean X_T = {mean:.4} -> {}",
            back.n_paths,
            back.grid.len(),
            n_obs as f64 / back.n_paths as f64,
            dir.display()
        );
    }
    Ok(())
}
