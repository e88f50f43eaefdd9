//! Train a coefficient model on a small GBM dataset, save it and reload it.
//!
//! `cargo run --release --example train_model -- joint-instant 20`

use itogen::losses::Scheme;
use itogen::path_sim::{observe, simulate, split, SdeSpec};
use itogen::trainer::{train, TrainConfig, TrainedModel};

fn main() -> itogen::Result<()> {
    let mut args = std::env::args().skip(1);
    let scheme: Scheme = args.next().map(|s| s.parse()).transpose()?.unwrap_or(Scheme::JointInstant);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let ds = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, 2000, 1)?;
    let (train_ds, valid_ds) = split(&ds, 0.8, 1)?;
    let train_obs = observe(&train_ds, 0.1, 2)?;
    let valid_obs = observe(&valid_ds, 0.1, 3)?;

    let config = TrainConfig { scheme, epochs, seed: 7, ..TrainConfig::default() };
    let result = train(&config, &train_obs, &valid_obs)?;
    for r in &result.log.records {
        println!("epoch {:>3}  train {:.4}  valid {:.4}  ({:.1}s)", r.epoch, r.train_loss, r.valid_loss, r.wall_time);
    }
    println!("selected epoch(s) {:?}, truncation level {:.2}", result.trained.best_epoch, result.trained.truncation_level);

    let dir = std::env::temp_dir().join(format!("itogen-model-{scheme}"));
    result.trained.save(&dir)?;
    let back = TrainedModel::load(&dir)?;
    println!("checkpoint {} (sha256 {})", dir.display(), back.manifest().checksum);
    Ok(())
}
