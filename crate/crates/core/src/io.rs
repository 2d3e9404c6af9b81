//! Flat-file formats.
//!
//! * observations: CSV with header `p1,p2,mu`
//! * residuals: one-column CSV with header `epsilon_hat`
//! * true simulator gaps: one-column CSV with header `epsilon`
//! * CDF exports: CSV with header `d,empirical[,<reference>...]`
//! * reports: JSON
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! file read back reproduces the in-memory values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inverse::EstimationResult;
use crate::lilliefors::{exponential_cdf, ResidualSample};
use crate::market::{Observation, PrivateInfo};

pub const OBSERVATION_HEADER: [&str; 3] = ["p1", "p2", "mu"];
pub const RESIDUAL_HEADER: &str = "epsilon_hat";
pub const TRUE_GAP_HEADER: &str = "epsilon";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IoError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            line,
            message: message.into(),
        }
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line() as usize);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IoError::Io(io),
            other => IoError::parse(line, format!("{other:?}")),
        }
    }
}

/// `{:?}` keeps a trailing `.0` on integral values and round-trips exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_observations<W: Write>(w: W, obs: &[Observation]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(OBSERVATION_HEADER)?;
    for o in obs {
        out.write_record([fmt_float(o.p1), fmt_float(o.p2), fmt_float(o.mu)])?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field(field: &str, line: usize, name: &str) -> Result<f64, IoError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| IoError::parse(line, format!("`{field}` is not a number ({name})")))?;
    if !v.is_finite() {
        return Err(IoError::parse(line, format!("{name} is not finite")));
    }
    Ok(v)
}

/// Reads observations, rejecting prices outside `[0, pbar]^2` when `pbar`
/// is given. Line numbers in errors are 1-based and count the header.
pub fn read_observations<R: Read>(r: R, pbar: Option<f64>) -> Result<Vec<Observation>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != OBSERVATION_HEADER {
        return Err(IoError::parse(1, format!("expected header `p1,p2,mu`, got `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut obs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(IoError::parse(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let o = Observation::new(
            parse_field(&rec[0], line, "p1")?,
            parse_field(&rec[1], line, "p2")?,
            parse_field(&rec[2], line, "mu")?,
        );
        if let Some(pbar) = pbar {
            if !o.is_valid(pbar) {
                return Err(IoError::parse(
                    line,
                    format!("prices ({}, {}) outside [0, {pbar}]^2", o.p1, o.p2),
                ));
            }
        }
        obs.push(o);
    }
    Ok(obs)
}

fn write_column<W: Write>(w: W, header: &str, values: &[f64]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([header])?;
    for &v in values {
        out.write_record([fmt_float(v)])?;
    }
    out.flush()?;
    Ok(())
}

fn read_column<R: Read>(r: R, header: &str) -> Result<Vec<f64>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let h = rdr.headers()?.clone();
    if h.len() != 1 || &h[0] != header {
        return Err(IoError::parse(1, format!("expected header `{header}`")));
    }
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 1 {
            return Err(IoError::parse(line, "expected a single column"));
        }
        values.push(parse_field(&rec[0], line, header)?);
    }
    Ok(values)
}

pub fn write_residuals<W: Write>(w: W, residuals: &[f64]) -> Result<(), IoError> {
    write_column(w, RESIDUAL_HEADER, residuals)
}

pub fn write_true_gaps<W: Write>(w: W, gaps: &[f64]) -> Result<(), IoError> {
    write_column(w, TRUE_GAP_HEADER, gaps)
}

/// Reads a residual file into a validated sample.
pub fn read_residuals<R: Read>(r: R) -> Result<ResidualSample, IoError> {
    let values = read_column(r, RESIDUAL_HEADER)?;
    if values.is_empty() {
        return Err(IoError::parse(1, "no residuals"));
    }
    if let Some(k) = values.iter().position(|v| *v < 0.0) {
        return Err(IoError::parse(k + 2, "negative residual"));
    }
    ResidualSample::new(values).map_err(|e| IoError::parse(0, e.to_string()))
}

pub fn read_true_gaps<R: Read>(r: R) -> Result<Vec<f64>, IoError> {
    read_column(r, TRUE_GAP_HEADER)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationStatus {
    Optimal,
    Infeasible,
}

/// JSON body written by the `estimate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub status: EstimationStatus,
    pub n: usize,
    pub objective: Option<f64>,
    pub theta_hat1: Option<PrivateInfo>,
    pub theta_hat2: Option<PrivateInfo>,
    pub duals: Option<Vec<[f64; 2]>>,
}

impl EstimationReport {
    pub fn optimal(r: &EstimationResult) -> Self {
        EstimationReport {
            status: EstimationStatus::Optimal,
            n: r.residuals.len(),
            objective: Some(r.objective),
            theta_hat1: Some(r.theta_hat1),
            theta_hat2: Some(r.theta_hat2),
            duals: Some(r.duals.clone()),
        }
    }

    pub fn infeasible(n: usize) -> Self {
        EstimationReport {
            status: EstimationStatus::Infeasible,
            n,
            objective: None,
            theta_hat1: None,
            theta_hat2: None,
            duals: None,
        }
    }
}

pub fn write_json<T: Serialize, W: Write>(mut w: W, value: &T) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Points of an empirical CDF, both limits at each jump, with optional
/// exponential reference curves evaluated on the same abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfExport {
    pub reference_names: Vec<String>,
    pub d: Vec<f64>,
    pub empirical: Vec<f64>,
    /// One column per reference, aligned with `d`.
    pub references: Vec<Vec<f64>>,
}

impl CdfExport {
    pub fn new(sample: &ResidualSample, references: &[(&str, f64)]) -> Self {
        let sorted = sample.sorted();
        let n = sorted.len() as f64;
        let mut d = Vec::with_capacity(2 * sorted.len());
        let mut empirical = Vec::with_capacity(2 * sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let x = sorted[k];
            let mut end = k;
            while end < sorted.len() && sorted[end] == x {
                end += 1;
            }
            d.extend([x, x]);
            empirical.extend([k as f64 / n, end as f64 / n]);
            k = end;
        }
        let refs = references
            .iter()
            .map(|&(_, rate)| d.iter().map(|&x| exponential_cdf(rate, x)).collect())
            .collect();
        CdfExport {
            reference_names: references.iter().map(|(name, _)| name.to_string()).collect(),
            d,
            empirical,
            references: refs,
        }
    }

    /// Largest gap between the empirical column and reference `k`.
    pub fn sup_distance(&self, k: usize) -> f64 {
        self.empirical
            .iter()
            .zip(&self.references[k])
            .map(|(e, f)| (e - f).abs())
            .fold(0.0, f64::max)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), IoError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["d".to_string(), "empirical".to_string()];
        header.extend(self.reference_names.iter().cloned());
        out.write_record(&header)?;
        for (i, (&d, &e)) in self.d.iter().zip(&self.empirical).enumerate() {
            let mut rec = vec![fmt_float(d), fmt_float(e)];
            rec.extend(self.references.iter().map(|col| fmt_float(col[i])));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn save<F>(path: &Path, write: F) -> Result<(), IoError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), IoError>,
{
    let mut w = create(path)?;
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn open(path: &Path) -> Result<File, IoError> {
    Ok(File::open(path)?)
}
