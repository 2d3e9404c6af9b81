//! Regulator-side inverse variational inequality.
//!
//! Given observed `(p1, p2, mu)` tuples, find linear demand parameters,
//! duals on the upper price bounds, and nonnegative per-observation gaps
//! such that every observation is an approximate equilibrium of the fitted
//! game, minimizing the total gap. With exponential gaps this total is the
//! negative log-likelihood up to terms in the rate, so the problem is an LP.
//!
//! Variables, in order: `theta_hat_1` (4), `theta_hat_2` (4), one dual per
//! observation and agent (`y[j][i]`), one residual per observation.
//!
//! For each observation `j` and agent `i`:
//!
//! ```text
//! m_i(p^j, mu^j; theta_i) - y_ij <= 0
//! pbar * (y_1j + y_2j) - sum_i p_ij * m_i(p^j, mu^j; theta_i) - eps_j = 0
//! y_ij = 0                         if p_ij < pbar - boundary_tol
//! y_ij >= 0, eps_j >= 0
//! ```
//!
//! plus `m_i(1, 1, 0; theta_i) = c_i` and `theta_ii <= 0`.
//!
//! Only the upper price bounds carry duals. An observation priced exactly
//! at zero can therefore be impossible to rationalize.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, Sense, VarBound};
use crate::market::{Agent, MarketConfig, Observation, PricePair, PrivateInfo};

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("no observations")]
    Empty,
    #[error("observation {index} lies outside [0, {pbar}]^2 or is not finite")]
    OutOfBox { index: usize, pbar: f64 },
    #[error("invalid estimator configuration: {0}")]
    Config(String),
    #[error("no admissible linear demand model rationalizes the observations")]
    Infeasible,
    #[error("LP solver failure: {0}")]
    Solver(LpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub pbar: f64,
    /// Values pinned for `m_i(1, 1, 0; theta_hat_i)`.
    pub norm_const: [f64; 2],
    pub boundary_tol: f64,
    /// Pin duals of observations strictly below the cap to zero.
    #[serde(default = "default_true")]
    pub complementary_slackness: bool,
}

fn default_true() -> bool {
    true
}

pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-6;

impl EstimatorConfig {
    pub fn new(pbar: f64, norm_const: [f64; 2]) -> Self {
        EstimatorConfig {
            pbar,
            norm_const,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            complementary_slackness: true,
        }
    }

    /// Normalizes to the true marginals at `(1, 1, 0)`.
    pub fn from_market(market: &MarketConfig) -> Self {
        Self::new(
            market.pbar,
            [
                market.reference_marginal(Agent::One),
                market.reference_marginal(Agent::Two),
            ],
        )
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        if !(self.pbar > 0.0 && self.pbar.is_finite()) {
            return Err(EstimateError::Config(format!("pbar must be positive, got {}", self.pbar)));
        }
        if !self.norm_const.iter().all(|c| *c > 0.0 && c.is_finite()) {
            return Err(EstimateError::Config(format!(
                "normalization constants must be positive, got {:?}",
                self.norm_const
            )));
        }
        if !(self.boundary_tol >= 0.0 && self.boundary_tol.is_finite()) {
            return Err(EstimateError::Config(format!(
                "boundary tolerance must be nonnegative, got {}",
                self.boundary_tol
            )));
        }
        Ok(())
    }

    pub fn at_cap(&self, price: f64) -> bool {
        price >= self.pbar - self.boundary_tol
    }
}

/// Column indices of the stacked decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub n_obs: usize,
}

impl VarLayout {
    pub fn num_vars(&self) -> usize {
        8 + 3 * self.n_obs
    }

    pub fn theta(&self, agent: Agent, k: usize) -> usize {
        4 * agent.index() + k
    }

    pub fn dual(&self, obs: usize, agent: Agent) -> usize {
        8 + 2 * obs + agent.index()
    }

    pub fn residual(&self, obs: usize) -> usize {
        8 + 2 * self.n_obs + obs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseProblem {
    pub lp: LinearProgram,
    pub layout: VarLayout,
}

/// Coefficients of `m_i(p, mu; theta_i)` on the stacked vector.
fn marginal_row(layout: &VarLayout, agent: Agent, p: PricePair, mu: f64, scale: f64) -> Vec<(usize, f64)> {
    agent
        .marginal_features(p, mu)
        .iter()
        .enumerate()
        .map(|(k, &phi)| (layout.theta(agent, k), scale * phi))
        .collect()
}

pub fn build_lp(observations: &[Observation], ecfg: &EstimatorConfig) -> Result<InverseProblem, EstimateError> {
    ecfg.validate()?;
    if observations.is_empty() {
        return Err(EstimateError::Empty);
    }
    if let Some(index) = observations.iter().position(|o| !o.is_valid(ecfg.pbar)) {
        return Err(EstimateError::OutOfBox { index, pbar: ecfg.pbar });
    }
    let layout = VarLayout { n_obs: observations.len() };
    let mut lp = LinearProgram::new(layout.num_vars());

    for agent in Agent::BOTH {
        lp.bounds[layout.theta(agent, agent.own_coef_index())] = VarBound::NonPos;
        let unit = marginal_row(&layout, agent, PricePair::new(1.0, 1.0), 0.0, 1.0);
        lp.add(unit, Sense::Eq, ecfg.norm_const[agent.index()]);
    }

    for (j, o) in observations.iter().enumerate() {
        let p = o.prices();
        let eps = layout.residual(j);
        lp.objective[eps] = 1.0;
        lp.bounds[eps] = VarBound::NonNeg;

        let mut gap = Vec::with_capacity(12);
        for agent in Agent::BOTH {
            let y = layout.dual(j, agent);
            let pinned = ecfg.complementary_slackness && !ecfg.at_cap(p.get(agent));
            lp.bounds[y] = if pinned { VarBound::Fixed(0.0) } else { VarBound::NonNeg };

            let mut row = marginal_row(&layout, agent, p, o.mu, 1.0);
            row.push((y, -1.0));
            lp.add(row, Sense::Le, 0.0);

            gap.push((y, ecfg.pbar));
            gap.extend(marginal_row(&layout, agent, p, o.mu, -p.get(agent)));
        }
        gap.push((eps, -1.0));
        lp.add(gap, Sense::Eq, 0.0);
    }
    Ok(InverseProblem { lp, layout })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat1: PrivateInfo,
    pub theta_hat2: PrivateInfo,
    pub duals: Vec<[f64; 2]>,
    pub residuals: Vec<f64>,
    pub objective: f64,
}

impl EstimationResult {
    pub fn theta_hat(&self, agent: Agent) -> &PrivateInfo {
        match agent {
            Agent::One => &self.theta_hat1,
            Agent::Two => &self.theta_hat2,
        }
    }

    /// `pbar * sum_i y_ij - sum_i p_ij * m_i(theta_hat)` recomputed from
    /// the fitted parameters and duals.
    pub fn implied_gap(&self, j: usize, o: &Observation, pbar: f64) -> f64 {
        Agent::BOTH
            .iter()
            .map(|&a| {
                pbar * self.duals[j][a.index()]
                    - o.price(a) * self.theta_hat(a).marginal_utility(a, o.prices(), o.mu)
            })
            .sum()
    }

    pub fn mean_residual(&self) -> f64 {
        self.objective / self.residuals.len() as f64
    }
}

pub fn solve_lp(problem: &InverseProblem) -> Result<EstimationResult, EstimateError> {
    let sol = problem.lp.solve().map_err(|e| match e {
        LpError::Infeasible => EstimateError::Infeasible,
        other => EstimateError::Solver(other),
    })?;
    let layout = problem.layout;
    let x = &sol.x;
    let theta = |agent: Agent| {
        PrivateInfo::from([0, 1, 2, 3].map(|k| x[layout.theta(agent, k)]))
    };
    let duals = (0..layout.n_obs)
        .map(|j| Agent::BOTH.map(|a| x[layout.dual(j, a)].max(0.0)))
        .collect();
    let residuals: Vec<f64> = (0..layout.n_obs).map(|j| x[layout.residual(j)].max(0.0)).collect();
    let objective = residuals.iter().sum();
    Ok(EstimationResult {
        theta_hat1: theta(Agent::One),
        theta_hat2: theta(Agent::Two),
        duals,
        residuals,
        objective,
    })
}

pub fn estimate(observations: &[Observation], ecfg: &EstimatorConfig) -> Result<EstimationResult, EstimateError> {
    solve_lp(&build_lp(observations, ecfg)?)
}
