//! Dataset directories: `meta.json`, `paths.csv` and `obs.csv`.
//!
//! Floats are written with 17 significant digits so files round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Grid, PathDataset};
use super::observation::ObservationSequence;
use super::sde::SdeSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: Option<SdeSpec>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_seed: Option<u64>,
}

#[inline]
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_dataset(
    dir: &Path,
    ds: &PathDataset,
    obs: Option<&[ObservationSequence]>,
    observation: Option<(f64, u64)>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        spec: ds.spec.clone(),
        horizon: ds.grid.horizon(),
        dt: ds.grid.dt,
        seed: ds.seed,
        n_paths: ds.n_paths,
        d: ds.dim,
        observation_p: observation.map(|o| o.0),
        observation_seed: observation.map(|o| o.1),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut out = String::from("path_id,time_index");
    for c in 0..ds.dim {
        write!(out, ",coord_{c}").unwrap();
    }
    out.push('\n');
    for p in 0..ds.n_paths {
        for k in 0..ds.grid.len() {
            write!(out, "{p},{k}").unwrap();
            for v in ds.value(p, k) {
                write!(out, ",{}", fmt_f64(*v)).unwrap();
            }
            out.push('\n');
        }
    }
    fs::write(dir.join("paths.csv"), out)?;

    if let Some(obs) = obs {
        let mut out = String::from("path_id,time_index,mask\n");
        for (p, seq) in obs.iter().enumerate() {
            for k in 0..seq.len() {
                let bits: String = seq.mask(k).iter().map(|&m| if m { '1' } else { '0' }).collect();
                writeln!(out, "{p},{},{bits}", seq.indices[k]).unwrap();
            }
        }
        fs::write(dir.join("obs.csv"), out)?;
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join("meta.json");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Reads a dataset directory; observations are returned when `obs.csv` exists.
pub fn read_dataset(dir: &Path) -> Result<(PathDataset, Option<Vec<ObservationSequence>>)> {
    let meta = read_meta(dir)?;
    let grid = Grid::new(meta.horizon, meta.dt)?;
    let d = meta.d;
    let paths_file = dir.join("paths.csv");
    if !paths_file.exists() {
        return Err(Error::MissingFile(paths_file));
    }
    let text = fs::read_to_string(&paths_file)?;
    let mut values = vec![f64::NAN; meta.n_paths * grid.len() * d];
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Data(format!("paths.csv line {}: malformed row", line_no + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + d {
            return Err(bad());
        }
        let p: usize = fields[0].parse().map_err(|_| bad())?;
        let k: usize = fields[1].parse().map_err(|_| bad())?;
        if p >= meta.n_paths || k >= grid.len() {
            return Err(bad());
        }
        for c in 0..d {
            values[(p * grid.len() + k) * d + c] = fields[2 + c].parse().map_err(|_| bad())?;
        }
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("paths.csv does not cover the full grid".into()));
    }
    let mut ds = PathDataset::from_values(grid, d, values, meta.seed)?;
    ds.spec = meta.spec.clone();

    let obs_file = dir.join("obs.csv");
    if !obs_file.exists() {
        return Ok((ds, None));
    }
    let text = fs::read_to_string(&obs_file)?;
    let mut seqs: Vec<Option<ObservationSequence>> = vec![None; ds.n_paths];
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Data(format!("obs.csv line {}: malformed row", line_no + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 || fields[2].len() != d {
            return Err(bad());
        }
        let p: usize = fields[0].parse().map_err(|_| bad())?;
        let k: usize = fields[1].parse().map_err(|_| bad())?;
        if p >= ds.n_paths {
            return Err(bad());
        }
        let mask: Vec<bool> = fields[2].chars().map(|c| c == '1').collect();
        match &mut seqs[p] {
            None if k == 0 => seqs[p] = Some(ObservationSequence::new(grid, ds.value(p, 0))),
            None => return Err(Error::Data(format!("obs.csv: path {p} does not start at t = 0"))),
            Some(seq) => seq.push(k, ds.value(p, k), &mask)?,
        }
    }
    let seqs = seqs
        .into_iter()
        .enumerate()
        .map(|(p, s)| s.ok_or_else(|| Error::Data(format!("obs.csv: no observations for path {p}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((ds, Some(seqs)))
}
