//! Estimate parameters and compare marginal distributions of two datasets.

use itogen::eval::{evaluate, ks_critical_1pct, Model};
use itogen::path_sim::{simulate, SdeSpec};

fn main() -> itogen::Result<()> {
    let reference = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, 4000, 1)?;
    let close = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, 4000, 2)?;
    let off = simulate(&SdeSpec::gbm(1.5, 0.4, 1.0), 1.0, 0.01, 4000, 3)?;
    let report = evaluate(Model::Gbm, ("reference", &reference), &[("same law", &close), ("other law", &off)], &[0.5, 1.0])?;
    print!("{}", report.parameters_csv());
    let crit = ks_critical_1pct(4000, 4000);
    for (name, ms) in &report.marginals {
        for m in ms {
            println!("{name} t={}: KS {:.4} (1% critical {crit:.4}), mean delta {:+.4}", m.time, m.ks, m.mean_delta);
        }
    }
    Ok(())
}
