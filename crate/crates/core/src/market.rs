//! Economic primitives of the two-firm, single-item Bertrand market.
//!
//! Demand is linear in prices and the observed shock:
//!
//! ```text
//! D_i(p1, p2, mu; theta_i) = theta_i0 + p1 * theta_i1 + p2 * theta_i2 + mu * theta_i3 (+ eta_i)
//! ```
//!
//! and the marginal utility of firm `i` is the derivative of its revenue
//! `p_i * D_i` with respect to its own price. Both are linear in `theta`,
//! which is what makes the inverse problem a linear program.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the two competing firms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Agent {
    One,
    Two,
}

impl Agent {
    pub const BOTH: [Agent; 2] = [Agent::One, Agent::Two];

    /// Zero-based position of this agent in price pairs and parameter arrays.
    pub fn index(self) -> usize {
        match self {
            Agent::One => 0,
            Agent::Two => 1,
        }
    }

    pub fn other(self) -> Agent {
        match self {
            Agent::One => Agent::Two,
            Agent::Two => Agent::One,
        }
    }

    /// Position of the own-price coefficient inside a [`PrivateInfo`] layout.
    pub fn own_coef_index(self) -> usize {
        self.index() + 1
    }

    /// Coefficients `phi` such that `marginal_utility = theta . phi`.
    ///
    /// The own-price entry carries the price twice: once from the demand
    /// term and once from `p_i * dD_i/dp_i`.
    pub fn marginal_features(self, p: PricePair, mu: f64) -> [f64; 4] {
        let mut phi = [1.0, p.p1, p.p2, mu];
        phi[self.own_coef_index()] += p.get(self);
        phi
    }
}

/// A price vector that has not been validated against the feasible box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePair {
    pub p1: f64,
    pub p2: f64,
}

impl PricePair {
    pub fn new(p1: f64, p2: f64) -> Self {
        PricePair { p1, p2 }
    }

    pub fn get(&self, agent: Agent) -> f64 {
        match agent {
            Agent::One => self.p1,
            Agent::Two => self.p2,
        }
    }

    pub fn set(&mut self, agent: Agent, value: f64) {
        match agent {
            Agent::One => self.p1 = value,
            Agent::Two => self.p2 = value,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p1.is_finite() && self.p2.is_finite()
    }

    /// Membership in `[0, pbar]^2`.
    pub fn in_box(&self, pbar: f64) -> bool {
        (0.0..=pbar).contains(&self.p1) && (0.0..=pbar).contains(&self.p2)
    }
}

/// Linear demand parameters of one firm, laid out as
/// `(intercept, p1 coefficient, p2 coefficient, shock coefficient)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct PrivateInfo {
    pub intercept: f64,
    pub p1_coef: f64,
    pub p2_coef: f64,
    pub shock_coef: f64,
}

impl From<[f64; 4]> for PrivateInfo {
    fn from(v: [f64; 4]) -> Self {
        PrivateInfo {
            intercept: v[0],
            p1_coef: v[1],
            p2_coef: v[2],
            shock_coef: v[3],
        }
    }
}

impl From<PrivateInfo> for [f64; 4] {
    fn from(t: PrivateInfo) -> Self {
        t.to_array()
    }
}

impl PrivateInfo {
    pub fn new(intercept: f64, p1_coef: f64, p2_coef: f64, shock_coef: f64) -> Self {
        PrivateInfo {
            intercept,
            p1_coef,
            p2_coef,
            shock_coef,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.intercept, self.p1_coef, self.p2_coef, self.shock_coef]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Coefficient on the given agent's own price.
    pub fn own_price_coef(&self, agent: Agent) -> f64 {
        match agent {
            Agent::One => self.p1_coef,
            Agent::Two => self.p2_coef,
        }
    }

    /// Coefficient on the price of `agent`.
    pub fn price_coef(&self, agent: Agent) -> f64 {
        self.own_price_coef(agent)
    }

    /// Copy with `delta` added to the intercept. The simulator uses this to
    /// fold the unobserved demand term into a firm's parameters.
    pub fn shifted(self, delta: f64) -> Self {
        PrivateInfo {
            intercept: self.intercept + delta,
            ..self
        }
    }

    /// Demand at prices `p` and shock `mu`, plus the unmodeled term `eta`.
    /// The regulator's fitted demand is this with `eta = 0`.
    pub fn demand(&self, p: PricePair, mu: f64, eta: f64) -> f64 {
        self.intercept + p.p1 * self.p1_coef + p.p2 * self.p2_coef + self.shock_coef * mu + eta
    }

    /// Derivative of `p_i * D_i` with respect to `p_i`, at `eta = 0`.
    pub fn marginal_utility(&self, agent: Agent, p: PricePair, mu: f64) -> f64 {
        p.get(agent) * self.own_price_coef(agent) + self.demand(p, mu, 0.0)
    }

    /// `d m_i / d p_k`.
    pub fn marginal_slope(&self, agent: Agent, wrt: Agent) -> f64 {
        if agent == wrt {
            2.0 * self.own_price_coef(agent)
        } else {
            self.price_coef(wrt)
        }
    }
}

/// `p1 * D1 + p2 * D2` with the unmodeled terms set to zero.
pub fn joint_utility(p: PricePair, mu: f64, theta1: &PrivateInfo, theta2: &PrivateInfo) -> f64 {
    p.p1 * theta1.demand(p, mu, 0.0) + p.p2 * theta2.demand(p, mu, 0.0)
}

/// Gradient of [`joint_utility`] with respect to `(p1, p2)`.
pub fn joint_utility_gradient(
    p: PricePair,
    mu: f64,
    theta1: &PrivateInfo,
    theta2: &PrivateInfo,
) -> [f64; 2] {
    // d/dp1 (p1 D1 + p2 D2) = m1 + p2 * theta_21, symmetric for p2.
    [
        theta1.marginal_utility(Agent::One, p, mu) + p.p2 * theta2.p1_coef,
        theta2.marginal_utility(Agent::Two, p, mu) + p.p1 * theta1.p2_coef,
    ]
}

/// Constant Hessian of [`joint_utility`].
pub fn joint_utility_hessian(theta1: &PrivateInfo, theta2: &PrivateInfo) -> [[f64; 2]; 2] {
    let off = theta1.p2_coef + theta2.p1_coef;
    [[2.0 * theta1.p1_coef, off], [off, 2.0 * theta2.p2_coef]]
}

/// Where the simulator applies the unobserved demand term `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    /// `eta` is drawn but never enters demand.
    None,
    /// Only the competitive sampler sees `eta`.
    Competitive,
    /// Only the collusive maximization sees `eta`.
    #[default]
    Collusive,
    Both,
}

impl NoiseScope {
    pub fn applies_to_competitive(self) -> bool {
        matches!(self, NoiseScope::Competitive | NoiseScope::Both)
    }

    pub fn applies_to_collusive(self) -> bool {
        matches!(self, NoiseScope::Collusive | NoiseScope::Both)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("price upper bound must be positive and finite, got {0}")]
    PriceBound(f64),
    #[error("{name} must be nonnegative and finite, got {value}")]
    NegativeScale { name: &'static str, value: f64 },
    #[error("gap rate must be positive and finite, got {0}")]
    GapRate(f64),
    #[error("true parameters of agent {0} are not finite")]
    NonFiniteTheta(usize),
    #[error("joint utility is not strictly concave (hessian {0:?})")]
    NotConcave([[f64; 2]; 2]),
}

/// True market the simulator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub pbar: f64,
    pub theta1: PrivateInfo,
    pub theta2: PrivateInfo,
    pub shock_mean: f64,
    pub shock_std: f64,
    pub noise_std: f64,
    pub noise_scope: NoiseScope,
    pub lambda_bar: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            pbar: 8.0,
            theta1: PrivateInfo::new(10.0, -1.0, 0.5, 1.0),
            theta2: PrivateInfo::new(8.0, 0.4, -3.0, 1.0),
            shock_mean: 5.0,
            shock_std: 1.0,
            noise_std: 1.0,
            noise_scope: NoiseScope::default(),
            lambda_bar: 20.0,
        }
    }
}

impl MarketConfig {
    pub fn theta(&self, agent: Agent) -> &PrivateInfo {
        match agent {
            Agent::One => &self.theta1,
            Agent::Two => &self.theta2,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.pbar > 0.0 && self.pbar.is_finite()) {
            return Err(ConfigError::PriceBound(self.pbar));
        }
        for (name, value) in [("shock_std", self.shock_std), ("noise_std", self.noise_std)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ConfigError::NegativeScale { name, value });
            }
        }
        if !self.shock_mean.is_finite() {
            return Err(ConfigError::NegativeScale {
                name: "shock_mean",
                value: self.shock_mean,
            });
        }
        if !(self.lambda_bar > 0.0 && self.lambda_bar.is_finite()) {
            return Err(ConfigError::GapRate(self.lambda_bar));
        }
        for agent in Agent::BOTH {
            if !self.theta(agent).is_finite() {
                return Err(ConfigError::NonFiniteTheta(agent.index() + 1));
            }
        }
        Ok(())
    }

    /// Fails unless the joint revenue has a negative definite Hessian, which
    /// is what makes the collusive maximizer unique.
    pub fn check_concave(&self) -> Result<(), ConfigError> {
        let h = joint_utility_hessian(&self.theta1, &self.theta2);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if h[0][0] < 0.0 && det > 0.0 {
            Ok(())
        } else {
            Err(ConfigError::NotConcave(h))
        }
    }

    /// `m_i(1, 1, 0; theta_i)` under the true parameters.
    pub fn reference_marginal(&self, agent: Agent) -> f64 {
        self.theta(agent)
            .marginal_utility(agent, PricePair::new(1.0, 1.0), 0.0)
    }
}

/// One recorded `(p1, p2, mu)` tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p1: f64,
    pub p2: f64,
    pub mu: f64,
}

impl Observation {
    pub fn new(p1: f64, p2: f64, mu: f64) -> Self {
        Observation { p1, p2, mu }
    }

    pub fn prices(&self) -> PricePair {
        PricePair::new(self.p1, self.p2)
    }

    pub fn price(&self, agent: Agent) -> f64 {
        self.prices().get(agent)
    }

    pub fn is_valid(&self, pbar: f64) -> bool {
        self.mu.is_finite() && self.prices().in_box(pbar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn th1() -> PrivateInfo {
        MarketConfig::default().theta1
    }
    fn th2() -> PrivateInfo {
        MarketConfig::default().theta2
    }

    #[test]
    fn demand_examples() {
        assert_eq!(th1().demand(PricePair::new(1.0, 1.0), 0.0, 0.0), 9.5);
        let zero = PrivateInfo::default();
        assert_eq!(zero.demand(PricePair::new(3.0, -7.0), 4.2, 0.0), 0.0);
        assert_relative_eq!(
            th2().demand(PricePair::new(8.0, 2.7), 5.0, 0.0),
            8.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn marginal_utility_examples() {
        let p = PricePair::new(1.0, 1.0);
        assert_eq!(th1().marginal_utility(Agent::One, p, 0.0), 8.5);
        assert_relative_eq!(th2().marginal_utility(Agent::Two, p, 0.0), 2.4, epsilon = 1e-12);
        assert_relative_eq!(
            th1().marginal_utility(Agent::One, PricePair::new(8.0, 2.7), 5.0),
            0.35,
            epsilon = 1e-12
        );
    }

    #[test]
    fn joint_utility_examples() {
        assert_eq!(joint_utility(PricePair::new(0.0, 0.0), 3.0, &th1(), &th2()), 0.0);
        assert_relative_eq!(
            joint_utility(PricePair::new(1.0, 1.0), 0.0, &th1(), &th2()),
            14.9,
            epsilon = 1e-12
        );
        let g = joint_utility_gradient(PricePair::new(8.0, 20.2 / 6.0), 5.0, &th1(), &th2());
        assert!(g[1].abs() < 1e-3);
        assert!(g[0] > 0.0);
    }

    #[test]
    fn hessian_of_default_market() {
        let h = joint_utility_hessian(&th1(), &th2());
        assert_eq!(h, [[-2.0, 0.9], [0.9, -6.0]]);
        assert!(MarketConfig::default().check_concave().is_ok());
    }

    #[test]
    fn convex_market_is_rejected() {
        let cfg = MarketConfig {
            theta1: PrivateInfo::new(1.0, 1.0, 0.0, 0.0),
            ..MarketConfig::default()
        };
        assert!(matches!(cfg.check_concave(), Err(ConfigError::NotConcave(_))));
    }

    #[test]
    fn config_validation() {
        assert!(MarketConfig::default().validate().is_ok());
        let bad = MarketConfig {
            pbar: 0.0,
            ..MarketConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::PriceBound(0.0)));
        let bad = MarketConfig {
            lambda_bar: -1.0,
            ..MarketConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::GapRate(-1.0)));
        let bad = MarketConfig {
            noise_std: f64::NAN,
            ..MarketConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reference_marginals() {
        let cfg = MarketConfig::default();
        assert_eq!(cfg.reference_marginal(Agent::One), 8.5);
        assert_relative_eq!(cfg.reference_marginal(Agent::Two), 2.4, epsilon = 1e-12);
    }

    fn finite() -> impl Strategy<Value = f64> {
        -50.0..50.0f64
    }

    fn theta() -> impl Strategy<Value = PrivateInfo> {
        prop::array::uniform4(finite()).prop_map(PrivateInfo::from)
    }

    proptest! {
        #[test]
        fn marginal_is_demand_plus_own_term(t in theta(), p1 in finite(), p2 in finite(), mu in finite()) {
            let p = PricePair::new(p1, p2);
            for a in Agent::BOTH {
                let lhs = t.marginal_utility(a, p, mu);
                let rhs = t.demand(p, mu, 0.0) + p.get(a) * t.own_price_coef(a);
                prop_assert_eq!(lhs, rhs);
            }
        }

        #[test]
        fn features_reproduce_marginal(t in theta(), p1 in finite(), p2 in finite(), mu in finite()) {
            let p = PricePair::new(p1, p2);
            for a in Agent::BOTH {
                let phi = a.marginal_features(p, mu);
                let dot: f64 = t.to_array().iter().zip(phi).map(|(x, f)| x * f).sum();
                prop_assert!((dot - t.marginal_utility(a, p, mu)).abs() <= 1e-9 * (1.0 + dot.abs()));
            }
        }

        #[test]
        fn linear_in_theta(t in theta(), u in theta(), alpha in finite(), beta in finite(),
                           p1 in finite(), p2 in finite(), mu in finite()) {
            let p = PricePair::new(p1, p2);
            let mix: Vec<f64> = t.to_array().iter().zip(u.to_array()).map(|(a, b)| alpha * a + beta * b).collect();
            let mix = PrivateInfo::from([mix[0], mix[1], mix[2], mix[3]]);
            let scale = 1.0 + (alpha.abs() + beta.abs()) * 1e4;
            let d = mix.demand(p, mu, 0.0) - (alpha * t.demand(p, mu, 0.0) + beta * u.demand(p, mu, 0.0));
            prop_assert!(d.abs() <= 1e-9 * scale * 100.0);
            for a in Agent::BOTH {
                let d = mix.marginal_utility(a, p, mu)
                    - (alpha * t.marginal_utility(a, p, mu) + beta * u.marginal_utility(a, p, mu));
                prop_assert!(d.abs() <= 1e-9 * scale * 100.0);
            }
        }

        #[test]
        fn marginal_matches_finite_difference(t in theta(), p1 in 0.5..8.0f64, p2 in 0.5..8.0f64, mu in 0.0..10.0f64) {
            let h = 1e-5;
            for a in Agent::BOTH {
                let revenue = |x: f64| {
                    let mut p = PricePair::new(p1, p2);
                    p.set(a, x);
                    x * t.demand(p, mu, 0.0)
                };
                let x = PricePair::new(p1, p2).get(a);
                let fd = (revenue(x + h) - revenue(x - h)) / (2.0 * h);
                let m = t.marginal_utility(a, PricePair::new(p1, p2), mu);
                // Quadratic revenue: central differences are exact up to rounding.
                let scale = m.abs().max(1.0);
                prop_assert!((fd - m).abs() / scale <= 1e-6, "fd {} vs m {}", fd, m);
            }
        }
    }
}
