//! CSV and TOML readers and writers.

use crate::error::{CliError, CliResult};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use zifqr_core::simlab::MetricsReport;
use zifqr_core::{BasisKind, ReplicatedFunctionalDataset, ScalarCovariates, TimeGrid};

/// How raw time stamps map onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeNormalization {
    /// Times are already in [0, 1].
    Unit,
    /// Minute indices mapped affinely, `start ↦ 0` and `end ↦ 1`.
    Minutes { start: f64, end: f64 },
}

impl TimeNormalization {
    fn apply(&self, t: f64) -> Option<f64> {
        let u = match *self {
            Self::Unit => t,
            Self::Minutes { start, end } => (t - start) / (end - start),
        };
        (0.0..=1.0).contains(&u).then_some(u)
    }
}

impl FromStr for TimeNormalization {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "unit" {
            return Ok(Self::Unit);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["minutes", a, b] => {
                let start: f64 = a.parse().map_err(|_| format!("bad start minute `{a}`"))?;
                let end: f64 = b.parse().map_err(|_| format!("bad end minute `{b}`"))?;
                if end > start {
                    Ok(Self::Minutes { start, end })
                } else {
                    Err("minute window must have end > start".into())
                }
            }
            _ => Err(format!("expected `unit` or `minutes:START:END`, got `{s}`")),
        }
    }
}

#[derive(Debug, Deserialize)]
struct LongRecord {
    subject_id: String,
    replicate_id: String,
    time: f64,
    value: f64,
}

/// A dataset together with the subject labels in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub subjects: Vec<String>,
    pub data: ReplicatedFunctionalDataset,
}

fn index_of(map: &mut HashMap<String, usize>, order: &mut Vec<String>, key: &str) -> usize {
    if let Some(&i) = map.get(key) {
        return i;
    }
    map.insert(key.to_string(), order.len());
    order.push(key.to_string());
    order.len() - 1
}

/// Reads `subject_id,replicate_id,time,value` rows. Subjects and, within a
/// subject, replicates keep their order of first appearance; the grid is the
/// sorted union of normalized times and unobserved cells are masked.
pub fn ingest_csv(path: &Path, norm: TimeNormalization) -> CliResult<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (k, rec) in reader.deserialize::<LongRecord>().enumerate() {
        // header is line 1
        let line = k + 2;
        let rec = rec.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        if !(rec.value >= 0.0) || !rec.value.is_finite() {
            return Err(CliError::Data(format!("line {line}: value must be a non-negative number")));
        }
        let t = norm
            .apply(rec.time)
            .ok_or_else(|| CliError::Data(format!("line {line}: time {} falls outside the window", rec.time)))?;
        rows.push((line, rec, t));
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{} has no data rows", path.display())));
    }

    let mut times: Vec<f64> = rows.iter().map(|r| r.2).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let grid = TimeGrid::new(times.clone())
        .map_err(|e| CliError::Data(format!("cannot build a grid from the time column: {e}")))?;

    let mut subject_ix = HashMap::new();
    let mut subjects = Vec::new();
    let mut rep_ix: Vec<(HashMap<String, usize>, Vec<String>)> = Vec::new();
    let mut cells = Vec::with_capacity(rows.len());
    for (line, rec, t) in &rows {
        let i = index_of(&mut subject_ix, &mut subjects, &rec.subject_id);
        if rep_ix.len() <= i {
            rep_ix.push((HashMap::new(), Vec::new()));
        }
        let (map, order) = &mut rep_ix[i];
        let j = index_of(map, order, &rec.replicate_id);
        let l = times.binary_search_by(|p| p.total_cmp(t)).expect("time is on the grid");
        cells.push((*line, i, j, l, rec.value));
    }
    let n = subjects.len();
    let reps = rep_ix.iter().map(|(_, o)| o.len()).max().unwrap_or(0);
    let len = grid.len();
    let mut values = vec![0.0; n * reps * len];
    let mut observed = vec![false; n * reps * len];
    let mut first_line = vec![0usize; n * reps * len];
    for (line, i, j, l, v) in cells {
        let at = (i * reps + j) * len + l;
        if observed[at] {
            return Err(CliError::Data(format!(
                "duplicate (subject, replicate, time) on lines {} and {line}",
                first_line[at]
            )));
        }
        observed[at] = true;
        values[at] = v;
        first_line[at] = line;
    }
    let data = ReplicatedFunctionalDataset::new(n, reps, grid, values, observed)?;
    Ok(LabeledDataset { subjects, data })
}

/// Writes observed cells in long format with replicate labels `r1, r2, ...`.
pub fn emit_dataset<W: Write>(out: W, ds: &LabeledDataset) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "replicate_id", "time", "value"])?;
    let data = &ds.data;
    for (i, id) in ds.subjects.iter().enumerate() {
        for j in 0..data.replicates() {
            let rep = format!("r{}", j + 1);
            for (l, t) in data.grid().points().iter().enumerate() {
                if data.is_observed(i, j, l) {
                    w.write_record([id.as_str(), &rep, &t.to_string(), &data.value(i, j, l).to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a matrix with a leading `subject_id` (or other key) column.
pub fn write_matrix(path: &Path, key: &str, rows: &[String], header: &[String], m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec![key.to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head)?;
    for (r, id) in rows.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_matrix`]: row keys, column names and values.
pub fn read_matrix(path: &Path) -> CliResult<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().skip(1).map(String::from).collect();
    let mut keys = Vec::new();
    let mut vals = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() + 1 {
            return Err(CliError::Data(format!("{}: line {} has {} fields", path.display(), k + 2, rec.len())));
        }
        keys.push(rec[0].to_string());
        for f in rec.iter().skip(1) {
            vals.push(f.parse::<f64>().map_err(|_| CliError::Data(format!("{}: bad number `{f}`", path.display())))?);
        }
    }
    Ok((keys.clone(), header.clone(), DMatrix::from_row_slice(keys.len(), header.len(), &vals)))
}

/// Outcome and scalar covariates; an intercept is prepended to the
/// covariate columns found after `y`.
#[derive(Debug, Clone)]
pub struct Outcomes {
    pub subjects: Vec<String>,
    pub y: Vec<f64>,
    pub z: ScalarCovariates,
}

impl Outcomes {
    /// Reorders rows to follow `subjects`.
    pub fn aligned_to(&self, subjects: &[String]) -> CliResult<Outcomes> {
        let pos: HashMap<&str, usize> = self.subjects.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rows = subjects
            .iter()
            .map(|s| pos.get(s.as_str()).copied().ok_or_else(|| CliError::Data(format!("no outcome for subject `{s}`"))))
            .collect::<CliResult<Vec<usize>>>()?;
        Ok(Outcomes {
            subjects: subjects.to_vec(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            z: self.z.select_rows(&rows),
        })
    }
}

/// Reads `subject_id,y[,covariate...]`.
pub fn read_outcomes(path: &Path) -> CliResult<Outcomes> {
    let (subjects, header, m) = read_matrix(path)?;
    if header.first().map(String::as_str) != Some("y") {
        return Err(CliError::Data(format!("{}: second column must be `y`", path.display())));
    }
    if subjects.is_empty() {
        return Err(CliError::Data(format!("{} has no data rows", path.display())));
    }
    let y = m.column(0).iter().copied().collect();
    let cols = m.columns(1, m.ncols() - 1).into_owned();
    let names: Vec<&str> = header[1..].iter().map(String::as_str).collect();
    let z = ScalarCovariates::with_intercept(&cols, &names)?;
    Ok(Outcomes { subjects, y, z })
}

pub fn write_outcomes(path: &Path, subjects: &[String], y: &[f64], z: &ScalarCovariates) -> CliResult<()> {
    let zm = z.matrix();
    let p = zm.ncols();
    let m = DMatrix::from_fn(y.len(), p, |i, c| if c == 0 { y[i] } else { zm[(i, c)] });
    let mut header = vec!["y".to_string()];
    header.extend(z.names()[1..].iter().cloned());
    write_matrix(path, "subject_id", subjects, &header, &m)
}

/// Fixed column order: scenario_id, method, tau, metric, value, R, seed.
pub fn write_aggregate<W: Write>(out: W, report: &MetricsReport) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario_id", "method", "tau", "metric", "value", "R", "seed"])?;
    let r = report.replications.to_string();
    let seed = report.seed.to_string();
    for row in &report.rows {
        let tau = row.tau.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([
            report.scenario_id.as_str(),
            &row.method,
            &tau,
            row.metric,
            &row.value.to_string(),
            &r,
            &seed,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replicate records of a simulation run.
pub fn write_records<W: Write>(out: W, report: &MetricsReport) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "method", "error", "K", "mise_x", "mse_pi", "mse_pi_dagger", "iterations", "converged"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for rec in &report.records {
        w.write_record([
            rec.r.to_string(),
            rec.method.name(),
            rec.error.clone().unwrap_or_default(),
            rec.k.to_string(),
            rec.mise_x.to_string(),
            opt(rec.mse_pi),
            opt(rec.mse_pi_dagger),
            rec.iterations.to_string(),
            rec.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything downstream commands need to rebuild the basis of a
/// corrected directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMeta {
    pub method: String,
    pub basis: BasisKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub grid: Vec<f64>,
    /// Working segment boundaries when a zero-inflation profile was fitted.
    pub segments: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = toml::to_string(value).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(toml::from_str(&text)?)
}
