//! Seeded generation of observation tuples.
//!
//! Competitive data are epsilon-approximate Nash equilibria built by an
//! acceptance/rejection sampler: solve `p_i * m_i(p) = -eps / 2` for both
//! firms, keep interior roots, clamp a single coordinate that exceeds the
//! price cap and re-solve the other, reject everything else. Collusive data
//! maximize the joint revenue over the price box.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{
    joint_utility_gradient, joint_utility_hessian, Agent, ConfigError, MarketConfig,
    Observation, PricePair, PrivateInfo,
};

pub const NEWTON_MAX_ITER: usize = 100;
pub const NEWTON_TOL: f64 = 1e-10;
/// Consecutive rejections after which generation gives up.
pub const STALL_WINDOW: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no sample accepted in the last {0} draws")]
    GenerationStalled(usize),
    #[error("sample size must be at least 1")]
    EmptyDataset,
    #[error("draw source exhausted after {accepted} accepted samples")]
    DrawsExhausted { accepted: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Competitive,
    Collusive,
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "competitive" | "competing" | "1" => Ok(Scenario::Competitive),
            "collusive" | "colluding" | "2" => Ok(Scenario::Collusive),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Random inputs consumed by one sampler attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub mu: f64,
    pub eta: [f64; 2],
    pub eps: f64,
}

impl SampleDraw {
    pub fn new(mu: f64, eta: [f64; 2], eps: f64) -> Self {
        SampleDraw { mu, eta, eps }
    }

    pub fn without_noise(self) -> Self {
        SampleDraw {
            eta: [0.0, 0.0],
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleStatus {
    Accepted,
    RejectedNegativePrice,
    RejectedBoundaryInfeasible,
    RejectedNoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedSample {
    pub observation: Observation,
    /// Duals on the upper price bounds.
    pub dual: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleOutcome {
    Accepted(AcceptedSample),
    Rejected(SampleStatus),
}

impl SampleOutcome {
    pub fn status(&self) -> SampleStatus {
        match self {
            SampleOutcome::Accepted(_) => SampleStatus::Accepted,
            SampleOutcome::Rejected(s) => *s,
        }
    }

    pub fn accepted(&self) -> Option<&AcceptedSample> {
        match self {
            SampleOutcome::Accepted(a) => Some(a),
            SampleOutcome::Rejected(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("newton iteration did not converge")]
pub struct NoConvergence;

/// True parameters with the unmodeled demand terms folded into the intercepts.
fn shifted_thetas(cfg: &MarketConfig, eta: [f64; 2]) -> [PrivateInfo; 2] {
    [cfg.theta1.shifted(eta[0]), cfg.theta2.shifted(eta[1])]
}

/// Solution of `m_1 = m_2 = 0`, the exact root of the interior system at
/// `eps = 0`. `None` when the marginal system is singular.
fn stationary_marginals(th: &[PrivateInfo; 2], mu: f64) -> Option<PricePair> {
    // m_i = c_i + sum_k slope_ik p_k
    let c = [
        th[0].intercept + th[0].shock_coef * mu,
        th[1].intercept + th[1].shock_coef * mu,
    ];
    let a = [
        [th[0].marginal_slope(Agent::One, Agent::One), th[0].marginal_slope(Agent::One, Agent::Two)],
        [th[1].marginal_slope(Agent::Two, Agent::One), th[1].marginal_slope(Agent::Two, Agent::Two)],
    ];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-14 {
        return None;
    }
    let p1 = (-c[0] * a[1][1] + c[1] * a[0][1]) / det;
    let p2 = (-a[0][0] * c[1] + a[1][0] * c[0]) / det;
    let p = PricePair::new(p1, p2);
    p.is_finite().then_some(p)
}

fn interior_residual(th: &[PrivateInfo; 2], p: PricePair, mu: f64, eps: f64) -> [f64; 2] {
    [
        p.p1 * th[0].marginal_utility(Agent::One, p, mu) + 0.5 * eps,
        p.p2 * th[1].marginal_utility(Agent::Two, p, mu) + 0.5 * eps,
    ]
}

fn newton_2d(th: &[PrivateInfo; 2], mu: f64, eps: f64, start: PricePair) -> Option<PricePair> {
    let mut p = start;
    for _ in 0..=NEWTON_MAX_ITER {
        let f = interior_residual(th, p, mu, eps);
        if f[0].abs().max(f[1].abs()) < NEWTON_TOL {
            return Some(p);
        }
        // d(p_i m_i)/dp_k = [i == k] m_i + p_i dm_i/dp_k
        let mut jac = [[0.0; 2]; 2];
        for a in Agent::BOTH {
            let i = a.index();
            let m = th[i].marginal_utility(a, p, mu);
            for b in Agent::BOTH {
                let k = b.index();
                jac[i][k] = p.get(a) * th[i].marginal_slope(a, b) + if i == k { m } else { 0.0 };
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det.abs() < 1e-14 {
            return None;
        }
        let d1 = (f[0] * jac[1][1] - f[1] * jac[0][1]) / det;
        let d2 = (jac[0][0] * f[1] - jac[1][0] * f[0]) / det;
        p = PricePair::new(p.p1 - d1, p.p2 - d2);
        if !p.is_finite() {
            return None;
        }
    }
    None
}

/// Solves `p_i * D_i(p; theta_i + eta_i) + p_i^2 * theta_ii = -eps / 2` for
/// both firms.
///
/// Newton starts from the `eps = 0` root (the zero of both marginals), then
/// from `(pbar/2, pbar/2)`, then from `(1, 1)`.
pub fn newton_solve_interior(
    mu: f64,
    eta: [f64; 2],
    eps: f64,
    cfg: &MarketConfig,
) -> Result<PricePair, NoConvergence> {
    let th = shifted_thetas(cfg, eta);
    let half = 0.5 * cfg.pbar;
    let starts = stationary_marginals(&th, mu)
        .into_iter()
        .chain([PricePair::new(half, half), PricePair::new(1.0, 1.0)]);
    for start in starts {
        if let Some(p) = newton_2d(&th, mu, eps, start) {
            return Ok(p);
        }
    }
    Err(NoConvergence)
}

/// Solves `q * m_free(p) = -gap` in the free coordinate `q` with the other
/// price held at `fixed`.
fn newton_1d(
    theta: &PrivateInfo,
    free: Agent,
    fixed: f64,
    mu: f64,
    gap: f64,
    pbar: f64,
) -> Result<f64, NoConvergence> {
    let at = |q: f64| {
        let mut p = PricePair::new(fixed, fixed);
        p.set(free, q);
        p
    };
    let slope = theta.marginal_slope(free, free);
    let mut starts = Vec::with_capacity(3);
    if slope.abs() > 1e-14 {
        // zero of the (linear) marginal in q
        starts.push(-theta.marginal_utility(free, at(0.0), mu) / slope);
    }
    starts.extend([0.5 * pbar, 1.0]);

    'start: for q0 in starts {
        let mut q = q0;
        for _ in 0..=NEWTON_MAX_ITER {
            let m = theta.marginal_utility(free, at(q), mu);
            let g = q * m + gap;
            if g.abs() < NEWTON_TOL {
                return Ok(q);
            }
            let dg = m + q * slope;
            if !dg.is_finite() || dg.abs() < 1e-14 {
                continue 'start;
            }
            q -= g / dg;
            if !q.is_finite() {
                continue 'start;
            }
        }
    }
    Err(NoConvergence)
}

/// One attempt of the epsilon-approximate equilibrium sampler.
///
/// The draw's `eta` is used as given; callers decide whether noise applies.
pub fn sample_competitive(draw: SampleDraw, cfg: &MarketConfig) -> SampleOutcome {
    debug_assert!(draw.eps >= 0.0);
    let pbar = cfg.pbar;
    let p = match newton_solve_interior(draw.mu, draw.eta, draw.eps, cfg) {
        Ok(p) => p,
        Err(NoConvergence) => return SampleOutcome::Rejected(SampleStatus::RejectedNoConvergence),
    };
    if p.p1 < 0.0 || p.p2 < 0.0 {
        return SampleOutcome::Rejected(SampleStatus::RejectedNegativePrice);
    }
    if p.in_box(pbar) {
        return SampleOutcome::Accepted(AcceptedSample {
            observation: Observation::new(p.p1, p.p2, draw.mu),
            dual: [0.0, 0.0],
        });
    }
    let capped = match (p.p1 > pbar, p.p2 > pbar) {
        (true, false) => Agent::One,
        (false, true) => Agent::Two,
        _ => return SampleOutcome::Rejected(SampleStatus::RejectedBoundaryInfeasible),
    };
    let free = capped.other();
    let th = shifted_thetas(cfg, draw.eta);

    // The capped firm contributes pbar*y - pbar*m = 0 to the gap, so the
    // free firm carries all of it.
    let q = match newton_1d(&th[free.index()], free, pbar, draw.mu, draw.eps, pbar) {
        Ok(q) => q,
        Err(NoConvergence) => return SampleOutcome::Rejected(SampleStatus::RejectedNoConvergence),
    };
    if !(0.0..=pbar).contains(&q) {
        return SampleOutcome::Rejected(SampleStatus::RejectedBoundaryInfeasible);
    }
    let mut prices = PricePair::new(pbar, pbar);
    prices.set(free, q);
    let y = th[capped.index()].marginal_utility(capped, prices, draw.mu);
    // Accept only nonnegative duals; see README on the sign of this test.
    if y < 0.0 {
        return SampleOutcome::Rejected(SampleStatus::RejectedBoundaryInfeasible);
    }
    let mut dual = [0.0, 0.0];
    dual[capped.index()] = y;
    SampleOutcome::Accepted(AcceptedSample {
        observation: Observation::new(prices.p1, prices.p2, draw.mu),
        dual,
    })
}

/// Maximizer of `sum_i p_i * D_i(p; theta_i + eta_i)` over `[0, pbar]^2`.
///
/// Enumerates the nine active-set patterns of the box; for a strictly
/// concave objective the best feasible candidate is the unique maximizer.
pub fn sample_collusive_with_noise(
    mu: f64,
    eta: [f64; 2],
    cfg: &MarketConfig,
) -> Result<Observation, ConfigError> {
    cfg.check_concave()?;
    let th = shifted_thetas(cfg, eta);
    let h = joint_utility_hessian(&th[0], &th[1]);
    // gradient = h p + g
    let g = joint_utility_gradient(PricePair::new(0.0, 0.0), mu, &th[0], &th[1]);
    let value = |p: [f64; 2]| {
        0.5 * (h[0][0] * p[0] * p[0] + 2.0 * h[0][1] * p[0] * p[1] + h[1][1] * p[1] * p[1])
            + g[0] * p[0]
            + g[1] * p[1]
    };
    let pbar = cfg.pbar;
    let levels = [None, Some(0.0), Some(pbar)];
    let mut best: Option<([f64; 2], f64)> = None;
    for a in levels {
        for b in levels {
            let cand = match (a, b) {
                (None, None) => {
                    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                    [
                        (-g[0] * h[1][1] + g[1] * h[0][1]) / det,
                        (-h[0][0] * g[1] + h[1][0] * g[0]) / det,
                    ]
                }
                (None, Some(q)) => [-(g[0] + h[0][1] * q) / h[0][0], q],
                (Some(q), None) => [q, -(g[1] + h[1][0] * q) / h[1][1]],
                (Some(x), Some(y)) => [x, y],
            };
            if !cand.iter().all(|&c| (0.0..=pbar).contains(&c)) {
                continue;
            }
            let v = value(cand);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((cand, v));
            }
        }
    }
    // The corner patterns are always feasible.
    let (p, _) = best.expect("box corners are feasible");
    Ok(Observation::new(p[0], p[1], mu))
}

/// Noise-free collusive prices for shock `mu`.
pub fn sample_collusive(mu: f64, cfg: &MarketConfig) -> Result<Observation, ConfigError> {
    sample_collusive_with_noise(mu, [0.0, 0.0], cfg)
}

/// Source of sampler inputs. Implemented by the seeded generator and by
/// plain iterators so tests can force a draw sequence.
pub trait DrawSource {
    fn next_draw(&mut self) -> Option<SampleDraw>;
}

impl<I: Iterator<Item = SampleDraw>> DrawSource for I {
    fn next_draw(&mut self) -> Option<SampleDraw> {
        self.next()
    }
}

/// Seeded draws. Each draw consumes, in order: the shock, `eta_1`, `eta_2`,
/// then the gap.
pub struct SeededDraws {
    rng: ChaCha20Rng,
    shock: Normal<f64>,
    noise: Normal<f64>,
    gap: Exp<f64>,
}

impl SeededDraws {
    pub fn new(seed: u64, cfg: &MarketConfig) -> Result<Self, ConfigError> {
        Self::from_rng(ChaCha20Rng::seed_from_u64(seed), cfg)
    }

    /// Independent stream `stream` of `seed`.
    pub fn with_stream(seed: u64, stream: u64, cfg: &MarketConfig) -> Result<Self, ConfigError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self::from_rng(rng, cfg)
    }

    fn from_rng(rng: ChaCha20Rng, cfg: &MarketConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(SeededDraws {
            rng,
            shock: Normal::new(cfg.shock_mean, cfg.shock_std)
                .expect("validated shock distribution"),
            noise: Normal::new(0.0, cfg.noise_std).expect("validated noise distribution"),
            gap: Exp::new(cfg.lambda_bar).expect("validated gap rate"),
        })
    }

    pub fn draw(&mut self) -> SampleDraw {
        let mu = self.shock.sample(&mut self.rng);
        let eta1 = self.noise.sample(&mut self.rng);
        let eta2 = self.noise.sample(&mut self.rng);
        let eps = self.gap.sample(&mut self.rng);
        SampleDraw::new(mu, [eta1, eta2], eps)
    }

}

impl DrawSource for SeededDraws {
    fn next_draw(&mut self) -> Option<SampleDraw> {
        Some(self.draw())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub observations: Vec<Observation>,
    /// Drawn gaps of the accepted competitive samples, in order. Empty for
    /// collusive data. Only for test harnesses; the regulator never sees it.
    pub true_gaps: Vec<f64>,
    /// Constructed bound duals of the accepted competitive samples.
    pub true_duals: Vec<[f64; 2]>,
    pub draws_used: usize,
}

/// Draws until `n` observations are collected.
///
/// Competitive: sampler attempts until `n` acceptances. Collusive: one draw
/// per observation, using its shock (and noise, if in scope). Whether `eta`
/// enters demand is decided by `cfg.noise_scope`.
pub fn generate_from<S: DrawSource + ?Sized>(
    scenario: Scenario,
    n: usize,
    draws: &mut S,
    cfg: &MarketConfig,
) -> Result<Dataset, SimError> {
    if n == 0 {
        return Err(SimError::EmptyDataset);
    }
    cfg.validate()?;
    let mut data = Dataset {
        scenario,
        observations: Vec::with_capacity(n),
        true_gaps: Vec::new(),
        true_duals: Vec::new(),
        draws_used: 0,
    };
    match scenario {
        Scenario::Competitive => {
            let mut since_accept = 0usize;
            while data.observations.len() < n {
                let draw = draws.next_draw().ok_or(SimError::DrawsExhausted {
                    accepted: data.observations.len(),
                })?;
                data.draws_used += 1;
                let draw = if cfg.noise_scope.applies_to_competitive() {
                    draw
                } else {
                    draw.without_noise()
                };
                match sample_competitive(draw, cfg) {
                    SampleOutcome::Accepted(s) => {
                        since_accept = 0;
                        data.observations.push(s.observation);
                        data.true_gaps.push(draw.eps);
                        data.true_duals.push(s.dual);
                    }
                    SampleOutcome::Rejected(_) => {
                        since_accept += 1;
                        if since_accept >= STALL_WINDOW {
                            return Err(SimError::GenerationStalled(STALL_WINDOW));
                        }
                    }
                }
            }
        }
        Scenario::Collusive => {
            cfg.check_concave()?;
            for _ in 0..n {
                let draw = draws.next_draw().ok_or(SimError::DrawsExhausted {
                    accepted: data.observations.len(),
                })?;
                data.draws_used += 1;
                let eta = if cfg.noise_scope.applies_to_collusive() {
                    draw.eta
                } else {
                    [0.0, 0.0]
                };
                data.observations
                    .push(sample_collusive_with_noise(draw.mu, eta, cfg)?);
            }
        }
    }
    Ok(data)
}

/// Seeded dataset generation.
pub fn generate_dataset(
    scenario: Scenario,
    n: usize,
    seed: u64,
    cfg: &MarketConfig,
) -> Result<Dataset, SimError> {
    let mut draws = SeededDraws::new(seed, cfg)?;
    generate_from(scenario, n, &mut draws, cfg)
}
