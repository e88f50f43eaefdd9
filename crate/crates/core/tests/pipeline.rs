//! The command pipeline on tiny runs, through the library and the binary.

use std::path::Path;
use std::process::Command;

use itogen::cli::{cmd_evaluate, cmd_generate, cmd_plot, cmd_simulate, cmd_train, RunConfig};
use itogen::losses::Scheme;
use itogen::path_sim::io::read_dataset;
use itogen::trainer::{ModelConfig, TrainedModel};
use itogen::Error;

fn tiny(out: &Path, scheme: Scheme) -> RunConfig {
    let mut cfg = RunConfig { out: out.to_path_buf(), n_paths: 60, seed: 3, ..RunConfig::gbm() };
    cfg.train.scheme = scheme;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 20;
    cfg.train.model = ModelConfig { latent_dim: 12, hidden_width: 12, ..ModelConfig::default() };
    cfg.generation.n_paths = 30;
    cfg.generation.batch_size = 8;
    cfg.generation.record_coefficients = true;
    cfg.resolve(&Default::default()).unwrap()
}

#[test]
fn every_scheme_runs_through_all_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), Scheme::Base);
    cmd_simulate(&cfg).unwrap();
    let (data, obs) = read_dataset(&cfg.data_dir()).unwrap();
    assert_eq!((data.n_paths, obs.unwrap().len()), (60, 60));
    for scheme in Scheme::ALL {
        let mut c = cfg.clone();
        c.train.scheme = scheme;
        let model_dir = cmd_train(&c, true).unwrap();
        assert!(model_dir.join("train_log.csv").exists());
        let trained = TrainedModel::load(&model_dir).unwrap();
        assert_eq!(trained.scheme, scheme);
        let gen_dir = cmd_generate(&c).unwrap();
        let (gen, _) = read_dataset(&gen_dir).unwrap();
        assert_eq!(gen.grid.len(), 101);
        assert!(gen.n_paths <= 30);
        assert!(gen_dir.join("coefficients.csv").exists());
    }
    let report = cmd_evaluate(&cfg, &[]).unwrap();
    assert_eq!(report.parameters.len() + report.failed.len(), 5);
    assert!(report.parameters.contains_key("reference"));
    for f in ["report.json", "parameters.csv", "marginals.csv", "histograms.csv"] {
        assert!(cfg.eval_dir().join(f).exists(), "{f}");
    }
    let plots = cmd_plot(&cfg).unwrap();
    assert!(plots.iter().any(|p| p.file_name().unwrap() == "paths-joint-instant.svg"));
    assert!(cfg.out.join("manifest.json").exists());
}

#[test]
fn training_without_data_reports_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), Scheme::JointInstant);
    let err = cmd_train(&cfg, false).unwrap_err();
    assert!(matches!(err, Error::MissingFile(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn generating_with_a_checkpoint_of_another_scheme_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), Scheme::Instant);
    cmd_simulate(&cfg).unwrap();
    let model_dir = cmd_train(&cfg, false).unwrap();
    let mut other = cfg.clone();
    other.train.scheme = Scheme::JointInstant;
    std::fs::rename(&model_dir, other.model_dir(Scheme::JointInstant)).unwrap();
    assert!(matches!(cmd_generate(&other), Err(Error::Config { .. })));
}

fn itogen() -> Command {
    Command::new(env!("CARGO_BIN_EXE_itogen"))
}

#[test]
fn binary_simulates_and_maps_errors_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, r#"{"n_paths": 10, "observation": {"p": 0.5}}"#).unwrap();
    let out = dir.path().join("run");
    let status = itogen()
        .args(["simulate", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"])
        .status()
        .unwrap();
    assert!(status.success());
    let (ds, _) = read_dataset(&out.join("data")).unwrap();
    assert_eq!((ds.n_paths, ds.seed), (10, 4));

    std::fs::write(&cfg_path, r#"{"train_fraction": 2.0}"#).unwrap();
    let status = itogen().args(["simulate", "--config", cfg_path.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = itogen().args(["train", "--out", dir.path().join("empty").to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(3));

    let plan = itogen().args(["reproduce", "--table", "table2", "--scale", "0"]).output().unwrap();
    assert!(plan.status.success());
    let text = String::from_utf8(plan.stdout).unwrap();
    assert!(text.contains("Ou") && text.contains("joint-instant"), "{text}");
}

#[test]
fn seed_environment_variable_wins() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, r#"{"n_paths": 4}"#).unwrap();
    let status = itogen()
        .env("ITOGEN_SEED", "77")
        .args(["simulate", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read_dataset(&out.join("data")).unwrap().0.seed, 77);
}
