//! Lilliefors-style Kolmogorov-Smirnov test for exponential gaps.
//!
//! The rate is estimated from the same residuals it is tested against, so the
//! classic Kolmogorov critical values are too lenient; thresholds come from
//! the Lilliefors table for the exponential family at the 5% level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample means at or below this are treated as all-zero residuals.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestError {
    #[error("residual sample is empty")]
    Empty,
    #[error("residual {index} is negative or not finite ({value})")]
    InvalidResidual { index: usize, value: f64 },
    #[error("residual mean {0} is degenerate")]
    Degenerate(f64),
    #[error("significance level {0} has no built-in threshold table")]
    UnsupportedAlpha(f64),
    #[error("thresholds need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("invalid threshold table: {0}")]
    BadTable(String),
}

/// Nonnegative gap estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSample {
    values: Vec<f64>,
}

impl ResidualSample {
    pub fn new(values: Vec<f64>) -> Result<Self, TestError> {
        if values.is_empty() {
            return Err(TestError::Empty);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(TestError::InvalidResidual { index, value });
        }
        Ok(ResidualSample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Maximum-likelihood rate of an exponential: the reciprocal of the mean.
pub fn mle_exponential(sample: &ResidualSample) -> Result<f64, TestError> {
    let mean = sample.mean();
    if mean <= DEGENERACY_TOL {
        return Err(TestError::Degenerate(mean));
    }
    Ok(1.0 / mean)
}

/// Right-continuous empirical CDF at `d`.
pub fn empirical_cdf(sample: &ResidualSample, d: f64) -> f64 {
    let hits = sample.values.iter().filter(|&&v| v <= d).count();
    hits as f64 / sample.len() as f64
}

pub fn exponential_cdf(rate: f64, d: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else {
        -(-rate * d).exp_m1()
    }
}

/// Supremum distance between the empirical CDF and `Exp(rate)`.
///
/// Both one-sided limits of the step function are compared at every order
/// statistic, which is exact for a continuous reference CDF.
pub fn ks_statistic(sample: &ResidualSample, rate: f64) -> f64 {
    let sorted = sample.sorted();
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = exponential_cdf(rate, x);
            let above = (k + 1) as f64 / n - f;
            let below = f - k as f64 / n;
            above.abs().max(below.abs())
        })
        .fold(0.0, f64::max)
}

/// Critical values `tau(N)`.
///
/// Lookups use the tabulated entry when present. Beyond the largest
/// tabulated size below the asymptotic cutover, `coef / sqrt(N)` is used.
/// Otherwise values are interpolated linearly in `1 / sqrt(N)`, and
/// extrapolated from the first two entries below the smallest size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub alpha: f64,
    /// `(N, tau)` sorted by `N`.
    pub entries: Vec<(usize, f64)>,
    pub asymptotic_coef: f64,
    /// Sizes strictly above this use the asymptotic rule when not tabulated.
    pub asymptotic_from: usize,
    pub min_n: usize,
}

impl ThresholdTable {
    /// Exponential family, 5% level.
    pub fn exponential_05() -> Self {
        ThresholdTable {
            alpha: 0.05,
            entries: vec![
                (10, 0.325),
                (20, 0.234),
                (30, 0.192),
                (40, 0.168),
                (50, 0.150),
                (100, 0.106),
                (200, 0.075),
                (500, 0.047),
            ],
            asymptotic_coef: 1.06,
            asymptotic_from: 30,
            min_n: 3,
        }
    }

    pub fn for_alpha(alpha: f64) -> Result<Self, TestError> {
        if (alpha - 0.05).abs() < 1e-12 {
            Ok(Self::exponential_05())
        } else {
            Err(TestError::UnsupportedAlpha(alpha))
        }
    }

    pub fn validate(&self) -> Result<(), TestError> {
        if self.entries.len() < 2 {
            return Err(TestError::BadTable("need at least two entries".into()));
        }
        let ok = self.entries.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1);
        if !ok {
            return Err(TestError::BadTable(
                "sizes must increase and thresholds strictly decrease".into(),
            ));
        }
        if !(self.asymptotic_coef > 0.0) || self.min_n == 0 {
            return Err(TestError::BadTable("bad asymptotic rule or minimum size".into()));
        }
        Ok(())
    }

    pub fn threshold(&self, n: usize) -> Result<f64, TestError> {
        if n < self.min_n {
            return Err(TestError::TooFewSamples { n, min: self.min_n });
        }
        if let Some(&(_, tau)) = self.entries.iter().find(|e| e.0 == n) {
            return Ok(tau);
        }
        if n > self.asymptotic_from {
            return Ok(self.asymptotic_coef / (n as f64).sqrt());
        }
        let x = 1.0 / (n as f64).sqrt();
        let seg = match self.entries.iter().position(|e| e.0 > n) {
            Some(0) | None => 0,
            Some(k) => k - 1,
        };
        let (n0, t0) = self.entries[seg];
        let (n1, t1) = self.entries[seg + 1];
        let (x0, x1) = (1.0 / (n0 as f64).sqrt(), 1.0 / (n1 as f64).sqrt());
        Ok(t0 + (t1 - t0) * (x - x0) / (x1 - x0))
    }
}

/// `tau(N)` at the built-in level.
pub fn threshold(n: usize, alpha: f64) -> Result<f64, TestError> {
    ThresholdTable::for_alpha(alpha)?.threshold(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptH0Competing,
    RejectH0Colluding,
    RejectH0ModelInfeasible,
    DegeneratePerfectEquilibrium,
}

impl Decision {
    pub fn rejects_null(self) -> bool {
        matches!(self, Decision::RejectH0Colluding | Decision::RejectH0ModelInfeasible)
    }

    /// Short label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Decision::AcceptH0Competing => "Competing",
            Decision::RejectH0Colluding => "Colluding",
            Decision::RejectH0ModelInfeasible => "Infeasible",
            Decision::DegeneratePerfectEquilibrium => "Perfect",
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Ok,
    Degenerate,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub d_star: Option<f64>,
    pub tau: f64,
    /// `None` when the residuals are all zero.
    pub lambda_hat: Option<f64>,
    pub n: usize,
    pub alpha: f64,
    pub decision: Decision,
    pub status: ReportStatus,
}

impl TestReport {
    /// Report for a sample whose estimation LP had no solution.
    pub fn infeasible(n: usize, table: &ThresholdTable) -> Result<Self, TestError> {
        Ok(TestReport {
            d_star: None,
            tau: table.threshold(n)?,
            lambda_hat: None,
            n,
            alpha: table.alpha,
            decision: Decision::RejectH0ModelInfeasible,
            status: ReportStatus::Infeasible,
        })
    }
}

/// Reject the competitive null iff `d_star >= tau`.
pub fn decision_rule(d_star: f64, tau: f64) -> Decision {
    if d_star >= tau {
        Decision::RejectH0Colluding
    } else {
        Decision::AcceptH0Competing
    }
}

pub fn decide_with(sample: &ResidualSample, table: &ThresholdTable) -> Result<TestReport, TestError> {
    table.validate()?;
    let n = sample.len();
    let tau = table.threshold(n)?;
    match mle_exponential(sample) {
        Ok(rate) => {
            let d_star = ks_statistic(sample, rate);
            Ok(TestReport {
                d_star: Some(d_star),
                tau,
                lambda_hat: Some(rate),
                n,
                alpha: table.alpha,
                decision: decision_rule(d_star, tau),
                status: ReportStatus::Ok,
            })
        }
        Err(TestError::Degenerate(_)) => Ok(TestReport {
            d_star: None,
            tau,
            lambda_hat: None,
            n,
            alpha: table.alpha,
            decision: Decision::DegeneratePerfectEquilibrium,
            status: ReportStatus::Degenerate,
        }),
        Err(e) => Err(e),
    }
}

pub fn decide(sample: &ResidualSample, alpha: f64) -> Result<TestReport, TestError> {
    decide_with(sample, &ThresholdTable::for_alpha(alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn sample(v: &[f64]) -> ResidualSample {
        ResidualSample::new(v.to_vec()).unwrap()
    }

    /// Dense scan of |F_N - F| including both sides of each jump.
    fn brute_force_sup(s: &ResidualSample, rate: f64) -> f64 {
        let sorted = s.sorted();
        let hi = sorted[sorted.len() - 1] * 1.5 + 1e-9;
        let step = 1e-4 * hi;
        let mut best: f64 = 0.0;
        let mut d = 0.0;
        while d <= hi {
            best = best.max((empirical_cdf(s, d) - exponential_cdf(rate, d)).abs());
            d += step;
        }
        for &x in &sorted {
            let left = sorted.iter().filter(|&&v| v < x).count() as f64 / sorted.len() as f64;
            best = best.max((left - exponential_cdf(rate, x)).abs());
            best = best.max((empirical_cdf(s, x) - exponential_cdf(rate, x)).abs());
        }
        best
    }

    #[test]
    fn mle_examples() {
        assert_eq!(mle_exponential(&sample(&[1.0, 2.0, 3.0])).unwrap(), 0.5);
        assert!((mle_exponential(&sample(&[0.05])).unwrap() - 20.0).abs() < 1e-12);
        assert!(matches!(
            mle_exponential(&sample(&[0.0, 0.0])),
            Err(TestError::Degenerate(_))
        ));
    }

    #[test]
    fn ecdf_examples() {
        let s = sample(&[1.0, 2.0, 3.0]);
        assert!((empirical_cdf(&s, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(empirical_cdf(&s, 0.5), 0.0);
        assert_eq!(empirical_cdf(&s, 3.0), 1.0);
        assert_eq!(empirical_cdf(&s, 10.0), 1.0);
        assert_eq!(empirical_cdf(&sample(&[5.0, 5.0, 5.0]), 5.0), 1.0);
    }

    #[test]
    fn single_sample_statistic() {
        let x = 0.37;
        let d = ks_statistic(&sample(&[x]), 1.0 / x);
        assert!((d - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn quantile_sample_statistic() {
        for n in [1usize, 5, 50, 500] {
            let rate = 20.0;
            let v: Vec<f64> = (1..=n)
                .map(|k| -(1.0 - (k as f64 - 0.5) / n as f64).ln() / rate)
                .collect();
            let d = ks_statistic(&sample(&v), rate);
            assert!((d - 0.5 / n as f64).abs() < 1e-12, "n={n} d={d}");
        }
    }

    #[test]
    fn rejects_bad_samples() {
        assert_eq!(ResidualSample::new(vec![]), Err(TestError::Empty));
        assert!(matches!(
            ResidualSample::new(vec![1.0, -0.5]),
            Err(TestError::InvalidResidual { index: 1, .. })
        ));
        assert!(ResidualSample::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn tabulated_thresholds() {
        let expected = [
            (10, 0.325),
            (20, 0.234),
            (30, 0.192),
            (40, 0.168),
            (50, 0.150),
            (100, 0.106),
            (200, 0.075),
            (500, 0.047),
        ];
        for (n, tau) in expected {
            assert_eq!(threshold(n, 0.05).unwrap(), tau);
        }
        // The asymptotic rule reproduces the large tabulated sizes.
        for n in [100usize, 200, 500] {
            let rule = 1.06 / (n as f64).sqrt();
            assert!((rule - threshold(n, 0.05).unwrap()).abs() < 5e-4);
        }
    }

    #[test]
    fn untabulated_thresholds() {
        assert!((threshold(64, 0.05).unwrap() - 1.06 / 8.0).abs() < 1e-15);
        let t15 = threshold(15, 0.05).unwrap();
        assert!(t15 < 0.325 && t15 > 0.234);
        let t5 = threshold(5, 0.05).unwrap();
        assert!(t5 > 0.325 && t5 < 1.0);
        let mut prev = f64::INFINITY;
        for n in 3..=30 {
            let t = threshold(n, 0.05).unwrap();
            assert!(t < prev, "tau not decreasing at {n}");
            prev = t;
        }
        assert_eq!(
            threshold(2, 0.05),
            Err(TestError::TooFewSamples { n: 2, min: 3 })
        );
        assert_eq!(threshold(50, 0.01), Err(TestError::UnsupportedAlpha(0.01)));
    }

    #[test]
    fn custom_table() {
        let table = ThresholdTable {
            alpha: 0.10,
            entries: vec![(10, 0.3), (20, 0.2)],
            asymptotic_coef: 0.9,
            asymptotic_from: 20,
            min_n: 5,
        };
        // A constant sample is far from any exponential.
        let r = decide_with(&sample(&[0.1; 12]), &table).unwrap();
        assert_eq!(r.alpha, 0.10);
        assert_eq!(r.decision, Decision::RejectH0Colluding);
        let bad = ThresholdTable {
            entries: vec![(10, 0.2), (20, 0.3)],
            ..table
        };
        assert!(matches!(decide_with(&sample(&[1.0; 12]), &bad), Err(TestError::BadTable(_))));
    }

    #[test]
    fn decide_outcomes() {
        let r = decide(&sample(&[1.0, 2.0, 3.0]), 0.05).unwrap();
        assert_eq!(r.lambda_hat, Some(0.5));
        assert_eq!(r.n, 3);
        let r = decide(&sample(&[0.0; 10]), 0.05).unwrap();
        assert_eq!(r.decision, Decision::DegeneratePerfectEquilibrium);
        assert!(!r.decision.rejects_null());
        assert_eq!(decision_rule(0.089, 0.150), Decision::AcceptH0Competing);
        assert_eq!(decision_rule(0.263, 0.234), Decision::RejectH0Colluding);
        assert_eq!(decision_rule(0.150, 0.150), Decision::RejectH0Colluding);
    }

    #[test]
    fn exponential_samples_converge() {
        let exp = Exp::new(3.0).unwrap();
        let mut stats: Vec<f64> = (0..100)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v: Vec<f64> = (0..1000).map(|_| exp.sample(&mut rng)).collect();
                let s = sample(&v);
                ks_statistic(&s, mle_exponential(&s).unwrap())
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        assert!(stats[50] < 0.03, "median D* {}", stats[50]);
    }

    fn residuals() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0..10.0f64, 1..60)
            .prop_filter("non-degenerate", |v| v.iter().sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn statistic_in_unit_interval_and_permutation_invariant(v in residuals(), rot in 0usize..60) {
            let s = sample(&v);
            let rate = mle_exponential(&s).unwrap();
            let d = ks_statistic(&s, rate);
            prop_assert!((0.0..=1.0).contains(&d));
            let mut w = v.clone();
            let k = rot % w.len();
            w.rotate_left(k);
            w.reverse();
            prop_assert_eq!(d, ks_statistic(&sample(&w), rate));
        }

        #[test]
        fn scale_equivariance(v in residuals(), c in 0.01..100.0f64) {
            let s = sample(&v);
            let scaled = sample(&v.iter().map(|x| x * c).collect::<Vec<_>>());
            let r = mle_exponential(&s).unwrap();
            let rc = mle_exponential(&scaled).unwrap();
            prop_assert!((rc * c - r).abs() <= 1e-12 * r);
            let d = ks_statistic(&s, r);
            let dc = ks_statistic(&scaled, rc);
            prop_assert!((d - dc).abs() <= 1e-12);
        }

        #[test]
        fn matches_dense_scan(v in prop::collection::vec(0.0..5.0f64, 1..25)) {
            prop_assume!(v.iter().sum::<f64>() > 1e-3);
            let s = sample(&v);
            let rate = mle_exponential(&s).unwrap();
            prop_assert!((ks_statistic(&s, rate) - brute_force_sup(&s, rate)).abs() <= 1e-3);
        }

        #[test]
        fn decision_is_monotone(d1 in 0.0..1.0f64, d2 in 0.0..1.0f64, n in 3usize..1000) {
            let tau = threshold(n, 0.05).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            if decision_rule(lo, tau).rejects_null() {
                prop_assert!(decision_rule(hi, tau).rejects_null());
            }
        }
    }
}
