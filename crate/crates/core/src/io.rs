//! Data files, configuration, run manifests and event extraction.
//!
//! Observations use a long CSV with columns `site_id, time_id, value, censor`.
//! `value` is empty when missing; `censor` holds the threshold, `inf` for a
//! fully censored cell, or `0` for an uncensored one.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::latent_field::SpatialDesign;
use crate::simulate::empirical_quantile;

/// Site coordinates and covariates keyed by identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTable {
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub covariate_names: Vec<String>,
    /// d x p.
    pub covariates: DMatrix<f64>,
}

impl SiteTable {
    pub fn design(&self) -> Result<SpatialDesign> {
        SpatialDesign::new(self.coords.clone())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }
}

/// Observations in matrix form with row and column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LongData {
    pub site_ids: Vec<String>,
    pub time_ids: Vec<String>,
    /// n x d values, `NaN` where missing.
    pub y: DMatrix<f64>,
    /// n x d thresholds from the `censor` column; absent cells are `inf`.
    pub censor: DMatrix<f64>,
}

impl LongData {
    /// Sites whose every cell is fully censored.
    pub fn holdout_sites(&self) -> Vec<usize> {
        (0..self.site_ids.len())
            .filter(|&j| self.censor.column(j).iter().all(|u| *u == f64::INFINITY))
            .collect()
    }
}

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "Inf" | "INF" => Ok(f64::INFINITY),
        _ => t
            .parse::<f64>()
            .map_err(|_| Error::Validation(format!("line {line}: cannot parse {what} '{t}'"))),
    }
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(f))
}

pub fn write_sites(path: &Path, t: &SiteTable) -> Result<()> {
    let mut w = create(path)?;
    let mut header = vec!["site_id".to_string(), "x".into(), "y".into()];
    header.extend(t.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for (j, id) in t.ids.iter().enumerate() {
        let mut rec = vec![id.clone(), fmt_f64(t.coords[j][0]), fmt_f64(t.coords[j][1])];
        rec.extend((0..t.covariates.ncols()).map(|k| fmt_f64(t.covariates[(j, k)])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sites(path: &Path) -> Result<SiteTable> {
    let mut r = open(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 3 || header[0] != "site_id" || header[1] != "x" || header[2] != "y" {
        return Err(Error::Validation(format!(
            "{}: header must start with site_id,x,y",
            path.display()
        )));
    }
    let names = header[3..].to_vec();
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut cov = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Validation(format!("line {line}: expected {} fields", header.len())));
        }
        let id = rec[0].trim().to_string();
        if ids.contains(&id) {
            return Err(Error::Validation(format!("line {line}: duplicate site_id {id}")));
        }
        ids.push(id);
        coords.push([parse_f64(&rec[1], "x", line)?, parse_f64(&rec[2], "y", line)?]);
        for k in 3..rec.len() {
            cov.push(parse_f64(&rec[k], &header[k], line)?);
        }
    }
    let d = ids.len();
    Ok(SiteTable {
        ids,
        coords,
        covariates: DMatrix::from_row_slice(d, names.len(), &cov),
        covariate_names: names,
    })
}

/// Writes every cell, time-major; missing values are left empty.
pub fn write_observations(path: &Path, data: &LongData) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["site_id", "time_id", "value", "censor"])?;
    for (i, t) in data.time_ids.iter().enumerate() {
        for (j, s) in data.site_ids.iter().enumerate() {
            w.write_record([
                s.as_str(),
                t.as_str(),
                &fmt_f64(data.y[(i, j)]),
                &fmt_f64(data.censor[(i, j)]),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a long-format file; sites are ordered as in `sites`, times by first appearance.
pub fn read_observations(path: &Path, sites: &SiteTable) -> Result<LongData> {
    let mut r = open(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("{}: missing column {name}", path.display())))
    };
    let (cs, ct, cv) = (col("site_id")?, col("time_id")?, col("value")?);
    let cc = header.iter().position(|h| h == "censor");
    let mut time_ids: Vec<String> = Vec::new();
    let mut time_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut cells: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let sid = rec[cs].trim();
        let j = sites
            .index_of(sid)
            .ok_or_else(|| Error::Validation(format!("line {line}: site_id {sid} not in sites file")))?;
        let tid = rec[ct].trim().to_string();
        let i = *time_index.entry(tid.clone()).or_insert_with(|| {
            time_ids.push(tid.clone());
            time_ids.len() - 1
        });
        let v = if rec[cv].trim().is_empty() {
            f64::NAN
        } else {
            parse_f64(&rec[cv], "value", line)?
        };
        let u = match cc {
            Some(c) if !rec[c].trim().is_empty() => parse_f64(&rec[c], "censor", line)?,
            _ => 0.0,
        };
        if cells.insert((i, j), (v, u)).is_some() {
            return Err(Error::Validation(format!("line {line}: duplicate cell ({sid}, {tid})")));
        }
    }
    let (n, d) = (time_ids.len(), sites.ids.len());
    if n == 0 {
        return Err(Error::Validation(format!("{}: no observations", path.display())));
    }
    let mut y = DMatrix::from_element(n, d, f64::NAN);
    let mut censor = DMatrix::from_element(n, d, f64::INFINITY);
    for ((i, j), (v, u)) in cells {
        y[(i, j)] = v;
        censor[(i, j)] = if v.is_nan() { f64::INFINITY } else { u };
    }
    Ok(LongData {
        site_ids: sites.ids.clone(),
        time_ids,
        y,
        censor,
    })
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub chains: Option<usize>,
    pub config_path: String,
    pub config: serde_json::Value,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Hash of config, seed and inputs; checkpoints carry it.
    pub fingerprint: String,
    pub elapsed_seconds: f64,
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Cross-site daily means and the event flag for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub time: usize,
    pub mean: f64,
    pub n_used: usize,
    pub event: bool,
}

/// Flags days whose cross-site mean strictly exceeds the empirical
/// `quantile` of the daily-mean series; missing values are skipped.
pub fn extract_events(y: &DMatrix<f64>, quantile: f64) -> Result<Vec<DaySummary>> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Validation(format!("quantile {quantile} outside (0, 1)")));
    }
    let mut days = Vec::with_capacity(y.nrows());
    for i in 0..y.nrows() {
        let vals: Vec<f64> = y.row(i).iter().copied().filter(|v| !v.is_nan()).collect();
        if vals.is_empty() {
            return Err(Error::Validation(format!("day {i} has no observed sites")));
        }
        days.push(DaySummary {
            time: i,
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            n_used: vals.len(),
            event: false,
        });
    }
    let mut s: Vec<f64> = days.iter().map(|d| d.mean).collect();
    s.sort_by(f64::total_cmp);
    let g = empirical_quantile(&s, quantile);
    for d in days.iter_mut() {
        d.event = d.mean > g;
    }
    Ok(days)
}
