//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use colltest_core::lp::{LinearProgram, Sense, VarBound};
use colltest_core::market::{MarketConfig, PrivateInfo};

pub const GRID_STEP: f64 = 1e-3;

/// Solves `lp` with the Clarabel interior-point method. `None` unless the
/// solver reports an optimum.
pub fn clarabel_solve(lp: &LinearProgram) -> Option<(Vec<f64>, f64)> {
    let n = lp.num_vars();
    let mut eq: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut le: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for c in &lp.constraints {
        match c.sense {
            Sense::Eq => eq.push((c.coeffs.clone(), c.rhs)),
            Sense::Le => le.push((c.coeffs.clone(), c.rhs)),
            Sense::Ge => le.push((c.coeffs.iter().map(|&(j, v)| (j, -v)).collect(), -c.rhs)),
        }
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        match *b {
            VarBound::Free => {}
            VarBound::NonNeg => le.push((vec![(j, -1.0)], 0.0)),
            VarBound::NonPos => le.push((vec![(j, 1.0)], 0.0)),
            VarBound::Fixed(v) => eq.push((vec![(j, 1.0)], v)),
        }
    }
    let (mut rows, mut cols, mut vals, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, (coeffs, rhs)) in eq.iter().chain(&le).enumerate() {
        for &(j, v) in coeffs {
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
        b.push(*rhs);
    }
    let a = CscMatrix::new_from_triplets(b.len(), n, rows, cols, vals);
    let p = CscMatrix::zeros((n, n));
    let mut cones = Vec::new();
    if !eq.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(eq.len()));
    }
    if !le.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(le.len()));
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&p, &lp.objective, &a, &b, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            Some((solver.solution.x.clone(), solver.solution.obj_val))
        }
        _ => None,
    }
}

/// `m_i` written out from the raw coefficients.
pub fn marginal(theta: &PrivateInfo, own: usize, p: [f64; 2], mu: f64, eta: f64) -> f64 {
    let own_coef = if own == 0 { theta.p1_coef } else { theta.p2_coef };
    theta.intercept + theta.p1_coef * p[0] + theta.p2_coef * p[1] + theta.shock_coef * mu + eta + own_coef * p[own]
}

fn grid(pbar: f64) -> impl Iterator<Item = f64> {
    let steps = (pbar / GRID_STEP).round() as usize;
    (0..=steps).map(|k| k as f64 * GRID_STEP)
}

/// Largest root of `a x^2 + b x + c = 0`, `a < 0`.
fn upper_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let disc = b * b - 4.0 * a * c;
    (disc >= 0.0).then(|| (-b - disc.sqrt()) / (2.0 * a))
}

/// Interior approximate equilibrium by scanning `p1`: firm 2's equation is
/// solved in closed form for each grid value, and the root of firm 1's
/// residual is located from its sign change between grid points.
pub fn grid_interior(cfg: &MarketConfig, mu: f64, eta: [f64; 2], eps: f64) -> Option<[f64; 2]> {
    let (t1, t2) = (&cfg.theta1, &cfg.theta2);
    let p2_of = |p1: f64| {
        // p2 * (c + 2 t22 p2) = -eps/2
        let c = t2.intercept + t2.p1_coef * p1 + t2.shock_coef * mu + eta[1];
        upper_root(2.0 * t2.p2_coef, c, 0.5 * eps)
    };
    let r1 = |p1: f64, p2: f64| p1 * marginal(t1, 0, [p1, p2], mu, eta[0]) + 0.5 * eps;
    let mut prev: Option<(f64, f64)> = None;
    for p1 in grid(cfg.pbar) {
        let Some(p2) = p2_of(p1) else {
            prev = None;
            continue;
        };
        let r = r1(p1, p2);
        if let Some((q, rq)) = prev {
            if rq.signum() != r.signum() {
                let x = q + (p1 - q) * rq / (rq - r);
                return p2_of(x).map(|y| [x, y]);
            }
        }
        prev = Some((p1, r));
    }
    None
}

/// Free price when firm `capped` sits at the cap: the sign change of
/// `q m_free + eps` over the grid, interpolated within the bracket.
pub fn grid_boundary(cfg: &MarketConfig, capped: usize, mu: f64, eta: [f64; 2], eps: f64) -> Option<f64> {
    let free = 1 - capped;
    let theta = if free == 0 { &cfg.theta1 } else { &cfg.theta2 };
    let g = |q: f64| {
        let mut p = [cfg.pbar; 2];
        p[free] = q;
        q * marginal(theta, free, p, mu, eta[free]) + eps
    };
    let mut prev = (0.0, g(0.0));
    for q in grid(cfg.pbar).skip(1) {
        let v = g(q);
        if v.signum() != prev.1.signum() {
            return Some(prev.0 + (q - prev.0) * prev.1 / (prev.1 - v));
        }
        prev = (q, v);
    }
    None
}

pub fn joint_value(cfg: &MarketConfig, p: [f64; 2], mu: f64, eta: [f64; 2]) -> f64 {
    let d = |t: &PrivateInfo, e: f64| t.intercept + t.p1_coef * p[0] + t.p2_coef * p[1] + t.shock_coef * mu + e;
    p[0] * d(&cfg.theta1, eta[0]) + p[1] * d(&cfg.theta2, eta[1])
}

/// Joint-revenue maximizer by a coarse scan of the box at ten grid steps
/// followed by a full-resolution scan around the coarse winner.
pub fn grid_collusive(cfg: &MarketConfig, mu: f64, eta: [f64; 2]) -> [f64; 2] {
    let coarse = 10.0 * GRID_STEP;
    let steps = (cfg.pbar / coarse).round() as usize;
    let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
    for i in 0..=steps {
        for j in 0..=steps {
            let p = [i as f64 * coarse, j as f64 * coarse];
            let v = joint_value(cfg, p, mu, eta);
            if v > best.1 {
                best = (p, v);
            }
        }
    }
    let centre = best.0;
    for di in -20i32..=20 {
        for dj in -20i32..=20 {
            let p = [
                (centre[0] + di as f64 * GRID_STEP).clamp(0.0, cfg.pbar),
                (centre[1] + dj as f64 * GRID_STEP).clamp(0.0, cfg.pbar),
            ];
            let v = joint_value(cfg, p, mu, eta);
            if v > best.1 {
                best = (p, v);
            }
        }
    }
    best.0
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}
