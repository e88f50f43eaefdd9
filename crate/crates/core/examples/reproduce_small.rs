//! Run the whole pipeline (simulate, train, generate, evaluate, plot) for the
//! GBM table at a small scale.
//!
//! `cargo run --release --example reproduce_small -- 0.05`

use itogen::cli::{cmd_reproduce, reproduce_plan, RunConfig, Table};

fn main() -> itogen::Result<()> {
    let scale: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let base = RunConfig { out: std::env::temp_dir().join("itogen-reproduce"), ..RunConfig::gbm() };
    print!("{}", reproduce_plan(Table::Table1, scale, &base)?);
    if let Some(rep) = cmd_reproduce(Table::Table1, scale, &base)? {
        print!("{}", rep.table);
    }
    Ok(())
}
