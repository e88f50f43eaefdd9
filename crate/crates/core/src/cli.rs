//! Pipeline stages behind the `itogen` command line: simulate, train,
//! generate, evaluate, reproduce and plot.
//!
//! Every stage reads and writes plain files below the run directory:
//!
//! ```text
//! <out>/data/            meta.json, paths.csv, obs.csv
//! <out>/model-<scheme>/  model.json, weights.bin, train_log.csv
//! <out>/gen-<scheme>/    meta.json, paths.csv, gen_meta.json, coefficients.csv
//! <out>/eval/            report.json, parameters.csv, marginals.csv, histograms.csv
//! <out>/plots/           *.svg
//! <out>/manifest.json    resolved configuration of the last command
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, Model};
use crate::generator::{generate, Estimator, GenerationConfig, GenerationRun};
use crate::losses::Scheme;
use crate::path_sim::io::{read_dataset, write_dataset};
use crate::path_sim::{observe_with, simulate, split_indices, ObservationScheme, ObservationSequence, PathDataset, SdeKind, SdeSpec};
use crate::plot;
use crate::trainer::{train, TrainConfig, TrainedModel};

/// Environment variable that overrides the global seed.
pub const SEED_ENV: &str = "ITOGEN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationConfig {
    pub p: f64,
    pub coord_p: Option<f64>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig { p: 0.1, coord_p: None }
    }
}

/// Which paths the reference estimates are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSplit {
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Times at which marginals are compared.
    pub times: Vec<f64>,
    pub reference: ReferenceSplit,
    /// Paths drawn per dataset in path plots.
    pub plot_paths: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { times: vec![0.5, 1.0], reference: ReferenceSplit::Train, plot_paths: 1000 }
    }
}

/// One document describing a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub spec: SdeSpec,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub observation: ObservationConfig,
    /// Share of paths used for training; the rest is the validation set.
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub generation: GenerationConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            spec: SdeSpec::gbm(2.0, 0.3, 1.0),
            horizon: 1.0,
            dt: 0.01,
            n_paths: 20000,
            observation: ObservationConfig::default(),
            train_fraction: 0.8,
            train: TrainConfig::default(),
            generation: GenerationConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
}

impl RunConfig {
    /// GBM `mu = 2, sigma = 0.3, X_0 = 1` with the default dataset and training settings.
    pub fn gbm() -> Self {
        RunConfig::default()
    }

    /// OU `kappa = 2, theta = 3, sigma = 1, X_0 = 1`.
    pub fn ou() -> Self {
        RunConfig { spec: SdeSpec::ou(2.0, 3.0, 1.0, 1.0), ..RunConfig::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Applies flags, then the seed environment variable, and propagates the
    /// global seed to every stage.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| Error::config(SEED_ENV, format!("'{v}' is not an unsigned integer")))?;
        }
        if let Some(s) = o.scheme {
            self.train.scheme = s;
        }
        self.train.seed = self.seed;
        self.generation.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(self.horizon > 0.0 && self.dt > 0.0) {
            return Err(Error::config("horizon", "horizon and dt must be positive"));
        }
        if self.n_paths < 2 {
            return Err(Error::config("n_paths", "need at least two paths"));
        }
        if !(0.0..=1.0).contains(&self.observation.p) {
            return Err(Error::config("observation.p", "must lie in [0, 1]"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1)"));
        }
        self.train.validate()?;
        if !(self.generation.delta > 0.0) {
            return Err(Error::config("generation.delta", "must be positive"));
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn model_dir(&self, scheme: Scheme) -> PathBuf {
        self.out.join(format!("model-{scheme}"))
    }

    pub fn gen_dir(&self, scheme: Scheme) -> PathBuf {
        self.out.join(format!("gen-{scheme}"))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }

    fn eval_model(&self) -> Result<Model> {
        match self.spec.kind {
            SdeKind::Gbm => Ok(Model::Gbm),
            SdeKind::Ou => Ok(Model::Ou),
            SdeKind::Custom => Err(Error::config("spec.kind", "evaluation needs a gbm or ou dataset")),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
}

fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), config: cfg };
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

/// Simulates and observes the dataset into `<out>/data`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf> {
    write_manifest(cfg, "simulate")?;
    let mut ds = simulate(&cfg.spec, cfg.horizon, cfg.dt, cfg.n_paths, cfg.seed)?;
    ds.spec = Some(cfg.spec.clone());
    let scheme = ObservationScheme { p: cfg.observation.p, coord_p: cfg.observation.coord_p };
    let obs = observe_with(&ds, scheme, cfg.seed)?;
    let dir = cfg.data_dir();
    write_dataset(&dir, &ds, Some(&obs), Some((cfg.observation.p, cfg.seed)))?;
    Ok(dir)
}

struct Data {
    train: PathDataset,
    train_obs: Vec<ObservationSequence>,
    valid_obs: Vec<ObservationSequence>,
    all: PathDataset,
}

fn load_data(cfg: &RunConfig) -> Result<Data> {
    let (all, obs) = read_dataset(&cfg.data_dir())?;
    let obs = obs.ok_or_else(|| Error::MissingFile(cfg.data_dir().join("obs.csv")))?;
    let (tr, va) = split_indices(all.n_paths, cfg.train_fraction, cfg.seed)?;
    Ok(Data {
        train: all.subset(&tr),
        train_obs: tr.iter().map(|&i| obs[i].clone()).collect(),
        valid_obs: va.iter().map(|&i| obs[i].clone()).collect(),
        all,
    })
}

/// Trains `cfg.train.scheme` on `<out>/data`; writes the checkpoint and log.
///
/// With `with_wall_time = false` the log omits timings so that it is
/// reproducible byte for byte.
pub fn cmd_train(cfg: &RunConfig, with_wall_time: bool) -> Result<PathBuf> {
    write_manifest(cfg, "train")?;
    let data = load_data(cfg)?;
    let result = train(&cfg.train, &data.train_obs, &data.valid_obs)?;
    let dir = cfg.model_dir(cfg.train.scheme);
    result.trained.save(&dir)?;
    result.log.write_csv(&dir.join("train_log.csv"), with_wall_time)?;
    if let Some(reason) = result.divergence {
        let epoch = result.log.records.len();
        return Err(Error::TrainingDivergence { epoch, reason });
    }
    Ok(dir)
}

/// Generates from the checkpoint of `cfg.train.scheme` into `<out>/gen-<scheme>`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<PathBuf> {
    write_manifest(cfg, "generate")?;
    let scheme = cfg.train.scheme;
    let trained = TrainedModel::load(&cfg.model_dir(scheme))?;
    if trained.scheme != scheme {
        return Err(Error::config("train.scheme", format!("checkpoint was trained with {}", trained.scheme)));
    }
    let grid = crate::path_sim::Grid::new(cfg.horizon, cfg.dt)?;
    let run = generate(Estimator::Model(&trained), grid, &cfg.spec.x0, &cfg.generation)?;
    let dir = cfg.gen_dir(scheme);
    run.write(&dir)?;
    if let Some(recs) = &run.coefficients {
        fs::write(dir.join("coefficients.csv"), coefficients_csv(&run, recs.first().map(Vec::as_slice).unwrap_or(&[])))?;
    }
    Ok(dir)
}

fn coefficients_csv(run: &GenerationRun, recs: &[crate::generator::StepRecord]) -> String {
    let d = run.dataset.dim;
    let mut out = String::from("time");
    for c in 0..d {
        write!(out, ",x_{c}").unwrap();
    }
    for c in 0..d {
        write!(out, ",mu_{c}").unwrap();
    }
    for c in 0..d * d {
        write!(out, ",sigma_{c}").unwrap();
    }
    out.push('\n');
    for r in recs {
        write!(out, "{:.10}", r.time).unwrap();
        for v in r.x.iter().chain(&r.estimate.mu_hat).chain(&r.estimate.sigma_hat) {
            write!(out, ",{v:.10e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Compares generated datasets with the reference paths of `<out>/data`.
///
/// `datasets` are directories in the path_sim format; when empty, every
/// existing `<out>/gen-<scheme>` is used.
pub fn cmd_evaluate(cfg: &RunConfig, datasets: &[PathBuf]) -> Result<EvalReport> {
    write_manifest(cfg, "evaluate")?;
    let data = load_data(cfg)?;
    let reference = match cfg.eval.reference {
        ReferenceSplit::Train => data.train,
        ReferenceSplit::All => data.all,
    };
    let dirs: Vec<(String, PathBuf)> = if datasets.is_empty() {
        Scheme::ALL.iter().map(|s| (s.name().to_string(), cfg.gen_dir(*s))).filter(|(_, d)| d.exists()).collect()
    } else {
        datasets
            .iter()
            .map(|d| (d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| d.display().to_string()), d.clone()))
            .collect()
    };
    let loaded = dirs.iter().map(|(n, d)| Ok((n.clone(), read_dataset(d)?.0))).collect::<Result<Vec<_>>>()?;
    let refs: Vec<(&str, &PathDataset)> = loaded.iter().map(|(n, d)| (n.as_str(), d)).collect();
    let report = eval::evaluate(cfg.eval_model()?, ("reference", &reference), &refs, &cfg.eval.times)?;
    report.write(&cfg.eval_dir())?;
    Ok(report)
}

/// Writes SVG charts for the datasets of a run into `<out>/plots`.
pub fn cmd_plot(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_data(cfg)?;
    let reference = match cfg.eval.reference {
        ReferenceSplit::Train => data.train,
        ReferenceSplit::All => data.all,
    };
    let dir = cfg.out.join("plots");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut save = |name: String, svg: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        written.push(p);
        Ok(())
    };
    for scheme in Scheme::ALL {
        let gdir = cfg.gen_dir(scheme);
        if !gdir.exists() {
            continue;
        }
        let (gen, _) = read_dataset(&gdir)?;
        let title = format!("{} paths", scheme.label());
        let sets = [("reference", &reference, "steelblue"), ("generated", &gen, "darkorange")];
        save(format!("paths-{scheme}.svg"), plot::paths_svg(&title, &sets, cfg.eval.plot_paths))?;
        for m in eval::compare_marginals(&reference, &gen, &cfg.eval.times, 0)? {
            let title = format!("{}: distribution of X at t = {}", scheme.label(), m.time);
            save(format!("marginal-{scheme}-t{}.svg", m.time), plot::histogram_svg(&title, &m.histogram, ("reference", "generated")))?;
        }
        let coeffs = gdir.join("coefficients.csv");
        if coeffs.exists() {
            let series = coefficient_series(&fs::read_to_string(&coeffs)?, &cfg.spec);
            if !series.is_empty() {
                let refs: Vec<(&str, Vec<(f64, f64)>, &str)> = series.iter().map(|(n, p, c)| (n.as_str(), p.clone(), *c)).collect();
                save(format!("coefficients-{scheme}.svg"), plot::lines_svg(&format!("{}: coefficients along a generated path", scheme.label()), &refs))?;
            }
        }
    }
    Ok(written)
}

/// Estimated and true drift and diffusion along the path in `coefficients.csv` (d = 1).
fn coefficient_series(csv: &str, spec: &SdeSpec) -> Vec<(String, Vec<(f64, f64)>, &'static str)> {
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).filter_map(|l| l.split(',').map(|v| v.parse().ok()).collect()).collect();
    if rows.is_empty() || rows[0].len() != 4 {
        return Vec::new();
    }
    let truth = |x: f64| -> Option<(f64, f64)> {
        match spec.kind {
            SdeKind::Gbm => Some((spec.param("mu").ok()? * x, (spec.param("sigma").ok()? * x).powi(2))),
            SdeKind::Ou => Some((spec.param("kappa").ok()? * (spec.param("theta").ok()? - x), spec.param("sigma").ok()?.powi(2))),
            SdeKind::Custom => None,
        }
    };
    let mut out = vec![
        ("drift estimate".to_string(), rows.iter().map(|r| (r[0], r[2])).collect::<Vec<_>>(), "darkorange"),
        ("diffusion estimate".to_string(), rows.iter().map(|r| (r[0], r[3])).collect(), "seagreen"),
    ];
    if truth(rows[0][1]).is_some() {
        out.push(("true drift".to_string(), rows.iter().map(|r| (r[0], truth(r[1]).unwrap().0)).collect(), "black"));
        out.push(("true diffusion".to_string(), rows.iter().map(|r| (r[0], truth(r[1]).unwrap().1)).collect(), "gray"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Table {
    Table1,
    Table2,
}

impl std::str::FromStr for Table {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table1" | "1" | "gbm" => Ok(Table::Table1),
            "table2" | "2" | "ou" => Ok(Table::Table2),
            _ => Err(Error::config("table", format!("unknown table '{s}' (expected table1 or table2)"))),
        }
    }
}

/// Published values shown next to reproduced ones: `(row, values, invalid paths)`.
fn published(table: Table) -> Vec<(&'static str, Vec<f64>, Option<usize>)> {
    match table {
        Table::Table1 => vec![
            ("True params", vec![2.0, 0.3], None),
            ("Reference", vec![1.9841, 0.2941], Some(0)),
            ("Base", vec![2.1478, 0.8154], Some(234)),
            ("Joint Base", vec![2.0892, 0.2344], Some(0)),
            ("Instant", vec![1.8717, 0.2575], Some(0)),
            ("Joint Instant", vec![1.9619, 0.2974], Some(0)),
        ],
        Table::Table2 => vec![
            ("True params", vec![2.0, 3.0, 1.0], None),
            ("Reference", vec![2.0213, 3.0060, 1.0091], None),
            ("Joint Instant", vec![2.1642, 3.0216, 1.0293], None),
        ],
    }
}

/// Configuration of `cmd_reproduce` at `scale`: `20000 s` simulated paths,
/// `200 s` epochs and `5000 s` generated paths per scheme.
pub fn reproduce_config(table: Table, scale: f64, base: &RunConfig) -> Result<(RunConfig, Vec<Scheme>)> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::config("scale", "must be a non-negative number"));
    }
    let mut cfg = base.clone();
    let (spec, schemes) = match table {
        Table::Table1 => (SdeSpec::gbm(2.0, 0.3, 1.0), Scheme::ALL.to_vec()),
        Table::Table2 => (SdeSpec::ou(2.0, 3.0, 1.0, 1.0), vec![Scheme::JointInstant]),
    };
    cfg.spec = spec;
    cfg.horizon = 1.0;
    cfg.dt = 0.01;
    cfg.observation = ObservationConfig { p: 0.1, coord_p: None };
    cfg.n_paths = ((20000.0 * scale).round() as usize).max(2);
    cfg.train.epochs = (200.0 * scale).round() as usize;
    cfg.generation.n_paths = ((5000.0 * scale).round() as usize).max(1);
    cfg.generation.delta = cfg.dt;
    cfg.generation.record_coefficients = true;
    Ok((cfg, schemes))
}

/// Describes the stages `cmd_reproduce` would run.
pub fn reproduce_plan(table: Table, scale: f64, base: &RunConfig) -> Result<String> {
    let (cfg, schemes) = reproduce_config(table, scale, base)?;
    let mut s = String::new();
    writeln!(s, "reproduce {table:?} at scale {scale} into {}", cfg.out.display()).unwrap();
    writeln!(s, "  simulate {:?} {:?}: {} paths, T = {}, dt = {}, p = {}", cfg.spec.kind, cfg.spec.params, cfg.n_paths, cfg.horizon, cfg.dt, cfg.observation.p).unwrap();
    let names: Vec<&str> = schemes.iter().map(|s| s.name()).collect();
    writeln!(s, "  train {}: {} epochs, batch {}, seed {}", names.join(", "), cfg.train.epochs, cfg.train.batch_size, cfg.seed).unwrap();
    writeln!(s, "  generate {} paths per scheme, delta = {}", cfg.generation.n_paths, cfg.generation.delta).unwrap();
    writeln!(s, "  evaluate against the {:?} split at t = {:?}", cfg.eval.reference, cfg.eval.times).unwrap();
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub config: RunConfig,
    pub report: EvalReport,
    /// Rendered comparison table (markdown).
    pub table: String,
}

/// Runs every stage for `table` at `scale`. `scale = 0` only returns the plan.
pub fn cmd_reproduce(table: Table, scale: f64, base: &RunConfig) -> Result<Option<Reproduction>> {
    if scale == 0.0 {
        return Ok(None);
    }
    let (cfg, schemes) = reproduce_config(table, scale, base)?;
    if cfg.train.epochs == 0 {
        return Err(Error::config("scale", "too small for a single training epoch"));
    }
    cmd_simulate(&cfg)?;
    for &scheme in &schemes {
        let mut c = cfg.clone();
        c.train.scheme = scheme;
        cmd_train(&c, false)?;
        cmd_generate(&c)?;
    }
    let report = cmd_evaluate(&cfg, &[])?;
    cmd_plot(&cfg)?;
    let (md, csv) = render_table(table, &report, &schemes);
    fs::write(cfg.out.join("table.md"), &md)?;
    fs::write(cfg.out.join("table.csv"), csv)?;
    write_manifest(&cfg, &format!("reproduce {table:?} scale {scale}"))?;
    Ok(Some(Reproduction { config: cfg, report, table: md }))
}

fn render_table(table: Table, report: &EvalReport, schemes: &[Scheme]) -> (String, String) {
    let params: &[&str] = match table {
        Table::Table1 => &["mu", "sigma"],
        Table::Table2 => &["kappa", "theta", "sigma"],
    };
    let published_rows: BTreeMap<&str, (Vec<f64>, Option<usize>)> = published(table).into_iter().map(|(r, v, i)| (r, (v, i))).collect();
    let mut rows: Vec<(String, String)> = vec![("Reference".into(), "reference".into())];
    rows.extend(schemes.iter().map(|s| (s.label().to_string(), s.name().to_string())));

    let mut md = String::from("| method |");
    let mut csv = String::from("method");
    for p in params {
        write!(md, " {p} | published {p} |").unwrap();
        write!(csv, ",{p},published_{p}").unwrap();
    }
    md.push_str(" # invalid | published # invalid |\n|---|");
    csv.push_str(",invalid,published_invalid\n");
    for _ in 0..2 * params.len() + 2 {
        md.push_str("---:|");
    }
    md.push('\n');
    let truth = &published_rows["True params"].0;
    write!(md, "| True params |").unwrap();
    write!(csv, "True params").unwrap();
    for v in truth {
        write!(md, " {v} | {v} |").unwrap();
        write!(csv, ",{v},{v}").unwrap();
    }
    md.push_str(" - | - |\n");
    csv.push_str(",,\n");
    for (label, key) in rows {
        let est = report.parameters.get(&key);
        let (pv, pi) = published_rows.get(label.as_str()).cloned().unwrap_or((vec![], None));
        write!(md, "| {label} |").unwrap();
        write!(csv, "{label}").unwrap();
        for (i, p) in params.iter().enumerate() {
            let v = est.and_then(|e| e.get(*p)).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            let q = pv.get(i).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            write!(md, " {v} | {q} |").unwrap();
            write!(csv, ",{v},{q}").unwrap();
        }
        let inv = report.invalid.get(&key).map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let pinv = pi.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        writeln!(md, " {inv} | {pinv} |").unwrap();
        writeln!(csv, ",{inv},{pinv}").unwrap();
    }
    (md, csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 4, "train": {"epochs": 3}}"#).unwrap();
        assert_eq!((partial.seed, partial.train.epochs, partial.train.batch_size), (4, 3, 200));
        assert_eq!(cfg.observation.p, 0.1);
        assert_eq!(cfg.n_paths, 20000);
    }

    #[test]
    fn overrides_and_validation() {
        let o = Overrides { seed: Some(9), scheme: Some(Scheme::Base), out: Some("x".into()) };
        let cfg = RunConfig::default().resolve(&o).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.generation.seed, cfg.train.scheme), (9, 9, 9, Scheme::Base));
        let bad = RunConfig { train_fraction: 1.5, ..RunConfig::default() };
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train_fraction"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/cfg.json")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn dry_run_does_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let base = RunConfig { out: dir.path().join("run"), ..RunConfig::default() };
        assert!(cmd_reproduce(Table::Table1, 0.0, &base).unwrap().is_none());
        assert!(!dir.path().join("run").exists());
        let plan = reproduce_plan(Table::Table1, 0.2, &base).unwrap();
        assert!(plan.contains("4000 paths") && plan.contains("40 epochs") && plan.contains("1000 paths"));
    }

    #[test]
    fn missing_checkpoint_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { out: dir.path().to_path_buf(), ..RunConfig::default() };
        assert!(matches!(cmd_generate(&cfg), Err(Error::MissingFile(_))));
    }

    #[test]
    fn self_evaluation_has_zero_deltas() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { out: dir.path().to_path_buf(), n_paths: 50, eval: EvalConfig { reference: ReferenceSplit::All, ..EvalConfig::default() }, ..RunConfig::default() };
        let data = cmd_simulate(&cfg).unwrap();
        let report = cmd_evaluate(&cfg, &[data]).unwrap();
        assert_eq!(report.parameters["reference"], report.parameters["data"]);
        for m in &report.marginals["data"] {
            assert_eq!((m.ks, m.mean_delta, m.var_delta), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn table_names() {
        assert_eq!("table1".parse::<Table>().unwrap(), Table::Table1);
        assert_eq!("Table2".parse::<Table>().unwrap(), Table::Table2);
        assert!("t3".parse::<Table>().is_err());
    }
}
