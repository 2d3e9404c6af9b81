use std::path::{Path, PathBuf};

use colltest_core::harness::{self, ConfigFileError, ExperimentConfig};
use colltest_core::inverse::{estimate as fit, EstimateError};
use colltest_core::io::{self, CdfExport, EstimationReport, IoError};
use colltest_core::lilliefors::{decide_with, decision_rule, TestError, TestReport, ThresholdTable};
use colltest_core::lilliefors::{mle_exponential, ReportStatus};
use colltest_core::sim::{Scenario, SimError};
use thiserror::Error;

use crate::Common;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("model infeasible: {0}")]
    Infeasible(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Parse { .. } => CliError::Input(e.to_string()),
            IoError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Input(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::GenerationStalled(_) | SimError::DrawsExhausted { .. } => CliError::Internal(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TestError> for CliError {
    fn from(e: TestError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common.out.clone().unwrap_or_else(|| cfg.out_dir.clone())
}

fn written(path: &Path) {
    log::info!("wrote {}", path.display());
}

pub fn simulate(common: &Common, scenario: Option<Scenario>, n: Option<usize>, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let n = n.unwrap_or(cfg.sample_sizes[0]);
    if n == 0 {
        return Err(CliError::Input("--n must be at least 1".into()));
    }
    let data = colltest_core::sim::generate_dataset(cfg.scenario, n, cfg.seed, &cfg.market)?;
    let dir = out_dir(common, &cfg);
    let obs = dir.join("observations.csv");
    io::save(&obs, |w| io::write_observations(w, &data.observations))?;
    written(&obs);
    if cfg.scenario == Scenario::Competitive {
        let gaps = dir.join("true_gaps.csv");
        io::save(&gaps, |w| io::write_true_gaps(w, &data.true_gaps))?;
        written(&gaps);
    }
    log::info!("{} observations from {} draws", data.observations.len(), data.draws_used);
    Ok(())
}

pub fn estimate(common: &Common, observations: &Path, norm: Option<Vec<f64>>, no_slackness: bool) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let mut ecfg = cfg.estimator_config();
    if let Some(c) = norm {
        ecfg.norm_const = [c[0], c[1]];
    }
    if no_slackness {
        ecfg.complementary_slackness = false;
    }
    ecfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let obs = io::read_observations(io::open(observations)?, Some(ecfg.pbar))?;
    if obs.is_empty() {
        return Err(CliError::Input(format!("{}: no observations", observations.display())));
    }
    let dir = out_dir(common, &cfg);
    let report_path = dir.join("estimation.json");
    match fit(&obs, &ecfg) {
        Ok(est) => {
            let resid = dir.join("residuals.csv");
            io::save(&resid, |w| io::write_residuals(w, &est.residuals))?;
            written(&resid);
            io::save(&report_path, |w| io::write_json(w, &EstimationReport::optimal(&est)))?;
            written(&report_path);
            log::info!("objective {:.6}, mean residual {:.6}", est.objective, est.mean_residual());
            Ok(())
        }
        Err(EstimateError::Infeasible) => {
            io::save(&report_path, |w| io::write_json(w, &EstimationReport::infeasible(obs.len())))?;
            written(&report_path);
            Err(CliError::Infeasible("no parameters satisfy the equilibrium constraints".into()))
        }
        Err(e @ (EstimateError::Empty | EstimateError::OutOfBox { .. } | EstimateError::Config(_))) => {
            Err(CliError::Input(e.to_string()))
        }
        Err(e) => Err(CliError::Internal(e.to_string())),
    }
}

pub fn test(
    common: &Common,
    residuals: Option<&Path>,
    alpha: Option<f64>,
    d_star: Option<f64>,
    n: Option<usize>,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let alpha = alpha.unwrap_or(cfg.alpha);
    let table = ThresholdTable::for_alpha(alpha)?;
    let report = match (residuals, d_star, n) {
        (Some(path), _, _) => {
            let sample = io::read_residuals(io::open(path)?)?;
            decide_with(&sample, &table)?
        }
        (None, Some(d), Some(n)) => {
            if !(0.0..=1.0).contains(&d) {
                return Err(CliError::Input(format!("--d-star {d} outside [0, 1]")));
            }
            let tau = table.threshold(n)?;
            TestReport {
                d_star: Some(d),
                tau,
                lambda_hat: None,
                n,
                alpha,
                decision: decision_rule(d, tau),
                status: ReportStatus::Ok,
            }
        }
        _ => return Err(CliError::Input("give a residual file or --d-star with --n".into())),
    };
    let path = out_dir(common, &cfg).join("test_report.json");
    io::save(&path, |w| io::write_json(w, &report))?;
    written(&path);
    println!(
        "{} (D* = {}, tau = {:.3}, lambda_hat = {})",
        report.decision,
        report.d_star.map_or("NA".into(), |d| format!("{d:.3}")),
        report.tau,
        report.lambda_hat.map_or("NA".into(), |l| format!("{l:.2}")),
    );
    Ok(())
}

pub fn experiment(
    common: &Common,
    scenario: Option<Scenario>,
    n: Option<Vec<usize>>,
    replications: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(n) = n {
        cfg.sample_sizes = n;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    let dir = out_dir(common, &cfg);
    let result = harness::run_experiment(&cfg)?;
    for path in harness::write_experiment(&dir, &cfg, &result)? {
        written(&path);
    }
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed; see rows.json", result.rows.len());
    }
    Ok(())
}

pub fn plot_data(common: &Common, residuals: &Path, rate: Option<f64>) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let sample = io::read_residuals(io::open(residuals)?)?;
    let refs: Vec<(&str, f64)> = match rate {
        Some(r) if !(r > 0.0 && r.is_finite()) => {
            return Err(CliError::Input(format!("--rate {r} must be positive")));
        }
        Some(r) => vec![("reference", r)],
        None => Vec::new(),
    };
    let export = CdfExport::new(&sample, &refs);
    let path = out_dir(common, &cfg).join("cdf.csv");
    io::save(&path, |w| export.write(w))?;
    written(&path);
    if let (Some(_), Ok(fitted)) = (rate, mle_exponential(&sample)) {
        log::info!("sup distance {:.6} (fitted rate {fitted:.4})", export.sup_distance(0));
    }
    Ok(())
}
