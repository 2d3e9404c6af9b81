//! Experiment runner: simulate, estimate and test over a grid of sample
//! sizes and replications, then tabulate.
//!
//! Every `(N, replication)` cell draws from its own ChaCha stream derived
//! from the master seed, so cells are independent, can run in parallel, and
//! each one is reproducible on its own.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inverse::{estimate, EstimateError, EstimationResult, EstimatorConfig, DEFAULT_BOUNDARY_TOL};
use crate::io::{self, CdfExport, IoError};
use crate::lilliefors::{decide_with, Decision, ResidualSample, TestError, TestReport, ThresholdTable};
use crate::market::{ConfigError, MarketConfig};
use crate::sim::{generate_from, Dataset, Scenario, SeededDraws, SimError};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<ConfigError> for ConfigFileError {
    fn from(e: ConfigError) -> Self {
        ConfigFileError::Invalid(e.to_string())
    }
}

/// Estimator overrides; anything left out follows the market section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub norm_const: Option<[f64; 2]>,
    pub boundary_tol: f64,
    pub complementary_slackness: bool,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            norm_const: None,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            complementary_slackness: true,
        }
    }
}

impl EstimatorSettings {
    pub fn resolve(&self, market: &MarketConfig) -> EstimatorConfig {
        let mut e = EstimatorConfig::from_market(market);
        if let Some(c) = self.norm_const {
            e.norm_const = c;
        }
        e.boundary_tol = self.boundary_tol;
        e.complementary_slackness = self.complementary_slackness;
        e
    }
}

/// Everything an experiment run needs, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Sample size whose first replication gets CDF exports; `None` skips them.
    pub cdf_n: Option<usize>,
    pub market: MarketConfig,
    pub estimator: EstimatorSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::Competitive,
            sample_sizes: vec![30, 50, 100, 200, 500],
            replications: 1,
            alpha: 0.05,
            seed: 0,
            out_dir: PathBuf::from("out"),
            cdf_n: Some(50),
            market: MarketConfig::default(),
            estimator: EstimatorSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigFileError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigFileError> {
        self.market.validate()?;
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(ConfigFileError::Invalid("sample sizes must be positive".into()));
        }
        if self.replications == 0 {
            return Err(ConfigFileError::Invalid("replications must be at least 1".into()));
        }
        ThresholdTable::for_alpha(self.alpha).map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        self.estimator_config()
            .validate()
            .map_err(|e| ConfigFileError::Invalid(e.to_string()))
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        self.estimator.resolve(&self.market)
    }
}

/// Stream id for one cell. Sizes and replications both fit in 32 bits.
pub fn cell_stream(n: usize, replication: usize) -> u64 {
    ((n as u64) << 32) | (replication as u64 & 0xffff_ffff)
}

pub fn simulate_cell(
    scenario: Scenario,
    n: usize,
    seed: u64,
    replication: usize,
    market: &MarketConfig,
) -> Result<Dataset, SimError> {
    let mut draws = SeededDraws::with_stream(seed, cell_stream(n, replication), market)?;
    generate_from(scenario, n, &mut draws, market)
}

#[derive(Debug, Error)]
pub enum CellError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Test(#[from] TestError),
}

/// Everything produced for one cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub dataset: Dataset,
    /// `None` when the LP was infeasible.
    pub estimation: Option<EstimationResult>,
    pub report: TestReport,
}

/// Runs estimation and the test on an existing dataset. An infeasible LP is
/// reported as a decision, not an error.
pub fn analyze(
    dataset: Dataset,
    ecfg: &EstimatorConfig,
    table: &ThresholdTable,
) -> Result<CellOutcome, CellError> {
    let n = dataset.observations.len();
    match estimate(&dataset.observations, ecfg) {
        Ok(est) => {
            let sample = ResidualSample::new(est.residuals.clone())?;
            let report = decide_with(&sample, table)?;
            Ok(CellOutcome {
                dataset,
                estimation: Some(est),
                report,
            })
        }
        Err(EstimateError::Infeasible) => Ok(CellOutcome {
            dataset,
            estimation: None,
            report: TestReport::infeasible(n, table)?,
        }),
        Err(e) => Err(e.into()),
    }
}

pub fn run_cell(cfg: &ExperimentConfig, n: usize, replication: usize) -> Result<CellOutcome, CellError> {
    let table = ThresholdTable::for_alpha(cfg.alpha)?;
    let dataset = simulate_cell(cfg.scenario, n, cfg.seed, replication, &cfg.market)?;
    analyze(dataset, &cfg.estimator_config(), &table)
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub replication: usize,
    pub d_star: Option<f64>,
    pub tau: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub decision: Option<Decision>,
    /// Set when the cell failed; the other cells are unaffected.
    pub error: Option<String>,
}

impl ExperimentRow {
    fn from_outcome(n: usize, replication: usize, r: &Result<CellOutcome, CellError>) -> Self {
        match r {
            Ok(o) => ExperimentRow {
                n,
                replication,
                d_star: o.report.d_star,
                tau: Some(o.report.tau),
                lambda_hat: o.report.lambda_hat,
                decision: Some(o.report.decision),
                error: None,
            },
            Err(e) => ExperimentRow {
                n,
                replication,
                d_star: None,
                tau: None,
                lambda_hat: None,
                decision: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    /// Outcome of the first replication at `cdf_n`, if it ran cleanly.
    pub cdf_cell: Option<CellOutcome>,
}

/// Runs every cell. Output order is `sample_sizes` order, then replication,
/// regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ConfigFileError> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();
    let outcomes: Vec<_> = cells
        .par_iter()
        .map(|&(n, r)| {
            let out = run_cell(cfg, n, r);
            if let Err(e) = &out {
                log::warn!("cell N={n} rep={r} failed: {e}");
            }
            out
        })
        .collect();
    let rows = cells
        .iter()
        .zip(&outcomes)
        .map(|(&(n, r), o)| ExperimentRow::from_outcome(n, r, o))
        .collect();
    let cdf_cell = cfg.cdf_n.and_then(|cdf_n| {
        let k = cells.iter().position(|&(n, r)| n == cdf_n && r == 0)?;
        outcomes.into_iter().nth(k)?.ok()
    });
    Ok(ExperimentResult { rows, cdf_cell })
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.decimals$}"))
}

/// Results table: `N,D*,tau(N),lambda_hat,Decision`.
pub fn write_table<W: std::io::Write>(w: W, rows: &[ExperimentRow]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["N", "D*", "tau(N)", "lambda_hat", "Decision"])?;
    for row in rows {
        out.write_record([
            row.n.to_string(),
            fmt_opt(row.d_star, 3),
            fmt_opt(row.tau, 3),
            fmt_opt(row.lambda_hat, 2),
            row.decision.map_or("Error", |d| d.label()).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// CDF exports for one cell: the residuals against the fitted exponential
/// and the simulator's gap rate, plus the true gaps for competitive data.
pub fn cdf_exports(outcome: &CellOutcome, lambda_bar: f64) -> Vec<(String, CdfExport)> {
    let n = outcome.dataset.observations.len();
    let mut out = Vec::new();
    if let Some(est) = &outcome.estimation {
        if let Ok(sample) = ResidualSample::new(est.residuals.clone()) {
            let mut refs = Vec::new();
            if let Some(l) = outcome.report.lambda_hat {
                refs.push(("fitted", l));
            }
            refs.push(("lambda_bar", lambda_bar));
            out.push((format!("cdf_residuals_N{n}.csv"), CdfExport::new(&sample, &refs)));
        }
    }
    if !outcome.dataset.true_gaps.is_empty() {
        if let Ok(sample) = ResidualSample::new(outcome.dataset.true_gaps.clone()) {
            out.push((
                format!("cdf_true_gaps_N{n}.csv"),
                CdfExport::new(&sample, &[("lambda_bar", lambda_bar)]),
            ));
        }
    }
    out
}

/// Writes `table.csv`, `rows.json` and any CDF exports into `dir`. Returns
/// the paths written, in order.
pub fn write_experiment(dir: &Path, cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let table = dir.join("table.csv");
    io::save(&table, |w| write_table(w, &result.rows))?;
    written.push(table);
    let rows = dir.join("rows.json");
    io::save(&rows, |w| io::write_json(w, &result.rows))?;
    written.push(rows);
    if let Some(cell) = &result.cdf_cell {
        for (name, export) in cdf_exports(cell, cfg.market.lambda_bar) {
            let path = dir.join(name);
            io::save(&path, |w| export.write(w))?;
            written.push(path);
        }
    }
    Ok(written)
}
