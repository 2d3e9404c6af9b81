//! Revised simplex for `min c'z, Az = b, z >= 0, b >= 0`.
//!
//! Every row gets an artificial column. Phase one minimizes their sum; phase
//! two bars them from re-entering. The basis inverse is kept explicitly,
//! updated by rank-one pivots and rebuilt from the original columns every
//! few iterations so rounding error cannot build up. Pricing is Dantzig's
//! rule with a Harris ratio test, switching to Bland's rule during long
//! degenerate runs. Rows are equilibrated before solving.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
/// Pivots smaller than this fraction of the largest entry are refused.
const REL_PIVOT_TOL: f64 = 1e-7;
const HARRIS_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;
const REFACTOR_EVERY: usize = 25;
/// Smallest reduced cost that may certify an unbounded ray.
const RAY_COST_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StdStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct StdSolution {
    pub status: StdStatus,
    pub z: Vec<f64>,
    /// Row multipliers `pi` with `c_B = B' pi`.
    pub pi: Vec<f64>,
    pub iterations: usize,
}

/// Equality-form problem with a dense row-major matrix.
#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Column pairs `(j, k)` with `A_k = -A_j`, `c_k = -c_j` (a split free
    /// variable). At most one of a pair may be basic.
    pub mirrors: Vec<(usize, usize)>,
}

/// Rows scaled to unit max-norm, with the factors applied.
fn equilibrate(sf: &StandardForm) -> (StandardForm, Vec<f64>) {
    let mut out = sf.clone();
    let mut scale = vec![1.0; sf.rows];
    for r in 0..sf.rows {
        let row = &mut out.a[r * sf.cols..(r + 1) * sf.cols];
        let big = row.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if big > 0.0 {
            let s = 1.0 / big;
            row.iter_mut().for_each(|v| *v *= s);
            out.b[r] *= s;
            scale[r] = s;
        }
    }
    (out, scale)
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

struct Revised {
    m: usize,
    /// Structural columns; column `n + r` is the artificial of row `r`.
    n: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    mirror: Vec<Option<usize>>,
    binv: DMatrix<f64>,
    since_refactor: usize,
    iterations: usize,
    degenerate: usize,
}

impl Revised {
    fn new(sf: &StandardForm) -> Revised {
        let (m, n) = (sf.rows, sf.cols);
        let mut is_basic = vec![false; n + m];
        is_basic[n..].iter_mut().for_each(|v| *v = true);
        let mut mirror = vec![None; n + m];
        for &(j, k) in &sf.mirrors {
            mirror[j] = Some(k);
            mirror[k] = Some(j);
        }
        Revised {
            m,
            n,
            a: DMatrix::from_row_slice(m, n, &sf.a),
            b: DVector::from_column_slice(&sf.b),
            basis: (n..n + m).collect(),
            is_basic,
            mirror,
            binv: DMatrix::identity(m, m),
            since_refactor: 0,
            iterations: 0,
            degenerate: 0,
        }
    }

    fn column(&self, j: usize) -> DVector<f64> {
        if j < self.n {
            self.a.column(j).into_owned()
        } else {
            let mut e = DVector::zeros(self.m);
            e[j - self.n] = 1.0;
            e
        }
    }

    /// Rebuilds the inverse from the original columns. Keeps the updated
    /// inverse if the basis looks singular.
    fn refactor(&mut self) {
        let mut bmat = DMatrix::zeros(self.m, self.m);
        for (k, &j) in self.basis.iter().enumerate() {
            bmat.set_column(k, &self.column(j));
        }
        if let Some(inv) = bmat.lu().try_inverse() {
            self.binv = inv;
        }
        self.since_refactor = 0;
    }

    fn basic_values(&self) -> DVector<f64> {
        &self.binv * &self.b
    }

    fn multipliers(&self, costs: &[f64]) -> DVector<f64> {
        let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| costs[j]));
        self.binv.tr_mul(&cb)
    }

    fn pivot(&mut self, r: usize, q: usize, w: &DVector<f64>) {
        let prow = self.binv.row(r).transpose() / w[r];
        let mut x = w.clone();
        x[r] = 0.0;
        self.binv.ger(-1.0, &x, &prow, 1.0);
        self.binv.set_row(r, &prow.transpose());
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n
    }

    /// Reduced costs of every column.
    fn reduced_costs(&self, costs: &[f64]) -> Vec<f64> {
        let pi = self.multipliers(costs);
        let d_struct = self.a.tr_mul(&pi);
        (0..self.n + self.m)
            .map(|j| costs[j] - if j < self.n { d_struct[j] } else { pi[j - self.n] })
            .collect()
    }

    /// Entering column among `0..enter_limit`, if any prices out.
    fn price(&self, d: &[f64], enter_limit: usize, bland: bool, skip: &[bool]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        let eligible = |j: usize| {
            !self.is_basic[j] && !skip[j] && self.mirror[j].is_none_or(|k| !self.is_basic[k])
        };
        for j in (0..enter_limit).filter(|&j| eligible(j)) {
            if d[j] < -COST_TOL {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, bd)| d[j] < bd) {
                    best = Some((j, d[j]));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Leaving row for direction `w`. In phase two a basic artificial with
    /// any nonzero entry blocks at ratio zero so it can never move off zero.
    fn ratio_test(&self, x: &DVector<f64>, w: &DVector<f64>, guard_artificials: bool, bland: bool) -> Option<(usize, f64)> {
        let tol = PIVOT_TOL.max(REL_PIVOT_TOL * w.amax());
        let mut blocking = Vec::new();
        for r in 0..self.m {
            let basic = self.basis[r];
            if guard_artificials && self.is_artificial(basic) && w[r].abs() > tol {
                blocking.push((r, 0.0, w[r].abs()));
            } else if w[r] > tol {
                blocking.push((r, x[r].max(0.0) / w[r], w[r]));
            }
        }
        if blocking.is_empty() {
            return None;
        }
        if bland {
            let min = blocking.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
            return blocking
                .iter()
                .filter(|e| e.1 <= min + 1e-12)
                .min_by_key(|e| self.basis[e.0])
                .map(|e| (e.0, e.1));
        }
        // Harris: bound the step using slightly relaxed rows, then take the
        // largest pivot within the bound.
        let bound = blocking
            .iter()
            .map(|&(r, ratio, a)| if ratio == 0.0 { 0.0 } else { (x[r].max(0.0) + HARRIS_TOL) / a })
            .fold(f64::INFINITY, f64::min);
        blocking
            .iter()
            .filter(|e| e.1 <= bound)
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .map(|e| (e.0, e.1))
    }

    fn step(&mut self, costs: &[f64], enter_limit: usize, phase_two: bool) -> Step {
        let bland = self.degenerate >= DEGENERATE_STREAK;
        let mut d = self.reduced_costs(costs);
        let mut skip = vec![false; self.n + self.m];
        let mut refreshed = false;
        loop {
            let Some(q) = self.price(&d, enter_limit, bland, &skip) else {
                if self.since_refactor > 0 && !refreshed {
                    // Confirm on a fresh inverse before stopping.
                    self.refactor();
                    d = self.reduced_costs(costs);
                    skip.iter_mut().for_each(|v| *v = false);
                    refreshed = true;
                    continue;
                }
                return Step::Optimal;
            };
            let w = &self.binv * self.column(q);
            let x = self.basic_values();
            let Some((r, ratio)) = self.ratio_test(&x, &w, phase_two, bland) else {
                // A ray is impossible in phase one, and a barely negative
                // reduced cost is rounding noise; try another column.
                if !phase_two || d[q] > -RAY_COST_TOL {
                    skip[q] = true;
                    continue;
                }
                return Step::Unbounded;
            };
            if ratio <= 1e-12 {
                self.degenerate += 1;
            } else {
                self.degenerate = 0;
            }
            self.pivot(r, q, &w);
            return Step::Pivoted;
        }
    }

    fn optimize(&mut self, costs: &[f64], enter_limit: usize, guard_artificials: bool, max_iter: usize) -> StdStatus {
        self.degenerate = 0;
        loop {
            if self.iterations >= max_iter {
                return StdStatus::IterationLimit;
            }
            match self.step(costs, enter_limit, guard_artificials) {
                Step::Optimal => return StdStatus::Optimal,
                Step::Unbounded => return StdStatus::Unbounded,
                Step::Pivoted => {}
            }
        }
    }

    /// Pivots basic artificials out where a structural column allows it.
    /// Rows where none does are redundant; their artificial stays basic at 0.
    fn expel_artificials(&mut self) {
        for r in 0..self.m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let row = self.binv.row(r).transpose();
            let entries = self.a.tr_mul(&row);
            let mut best: Option<(usize, f64)> = None;
            for j in (0..self.n).filter(|&j| !self.is_basic[j] && self.mirror[j].is_none_or(|k| !self.is_basic[k])) {
                let v = entries[j].abs();
                if v > 1e-7 && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let w = &self.binv * self.column(j);
                self.pivot(r, j, &w);
            }
        }
    }
}

pub(crate) fn solve(sf: &StandardForm, max_iter: Option<usize>) -> StdSolution {
    let (scaled, row_scale) = equilibrate(sf);
    let mut sol = solve_scaled(&scaled, max_iter);
    // c_B = B' S pi_s, so the unscaled multipliers are S pi_s.
    for (p, s) in sol.pi.iter_mut().zip(&row_scale) {
        *p *= s;
    }
    sol
}

fn solve_scaled(sf: &StandardForm, max_iter: Option<usize>) -> StdSolution {
    let (m, n) = (sf.rows, sf.cols);
    debug_assert!(sf.b.iter().all(|&v| v >= 0.0));
    let max_iter = max_iter.unwrap_or(50 * (m + n) + 1000);
    let fail = |status, iterations| StdSolution {
        status,
        z: Vec::new(),
        pi: Vec::new(),
        iterations,
    };

    if m == 0 {
        // Only sign constraints: optimal at zero unless some cost is negative.
        let unbounded = sf.c.iter().any(|&c| c < -COST_TOL);
        return StdSolution {
            status: if unbounded { StdStatus::Unbounded } else { StdStatus::Optimal },
            z: vec![0.0; n],
            pi: Vec::new(),
            iterations: 0,
        };
    }

    let mut rs = Revised::new(sf);
    let scale = 1.0 + sf.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));

    // Phase one.
    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|c| *c = 1.0);
    match rs.optimize(&phase1, n + m, false, max_iter) {
        StdStatus::Optimal => {}
        // The phase-one objective is bounded below; anything else is a
        // numerical breakdown and reported as such.
        StdStatus::Unbounded | StdStatus::IterationLimit => {
            return fail(StdStatus::IterationLimit, rs.iterations);
        }
        status => return fail(status, rs.iterations),
    }
    rs.refactor();
    let x = rs.basic_values();
    let infeasibility: f64 = rs
        .basis
        .iter()
        .zip(x.iter())
        .filter(|(&j, _)| j >= n)
        .map(|(_, &v)| v.max(0.0))
        .sum();
    if infeasibility > 1e-8 * scale {
        return fail(StdStatus::Infeasible, rs.iterations);
    }
    rs.expel_artificials();

    // Phase two.
    let mut phase2 = vec![0.0; n + m];
    phase2[..n].copy_from_slice(&sf.c);
    let status = rs.optimize(&phase2, n, true, max_iter);
    if status != StdStatus::Optimal {
        return fail(status, rs.iterations);
    }
    rs.refactor();
    let x = rs.basic_values();
    let pi = rs.multipliers(&phase2);
    let mut z = vec![0.0; n];
    for (k, &j) in rs.basis.iter().enumerate() {
        if j < n {
            z[j] = x[k].max(0.0);
        }
    }
    StdSolution {
        status: StdStatus::Optimal,
        z,
        pi: pi.iter().copied().collect(),
        iterations: rs.iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sf(rows: usize, cols: usize, a: &[f64], b: &[f64], c: &[f64]) -> StandardForm {
        StandardForm {
            rows,
            cols,
            a: a.to_vec(),
            b: b.to_vec(),
            c: c.to_vec(),
            mirrors: Vec::new(),
        }
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  (slacks s1..s3)
        let p = sf(
            3,
            5,
            &[
                1.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 2.0, 0.0, 1.0, 0.0, //
                3.0, 2.0, 0.0, 0.0, 1.0,
            ],
            &[4.0, 12.0, 18.0],
            &[-3.0, -5.0, 0.0, 0.0, 0.0],
        );
        let s = solve(&p, None);
        assert_eq!(s.status, StdStatus::Optimal);
        assert!((s.z[0] - 2.0).abs() < 1e-12);
        assert!((s.z[1] - 6.0).abs() < 1e-12);
        let objective: f64 = p.c.iter().zip(&s.z).map(|(c, z)| c * z).sum();
        assert!((objective + 36.0).abs() < 1e-12);
        // Known shadow prices: 0, 3/2, 1 (negated for the min form).
        let expect = [0.0, -1.5, -1.0];
        for (p, e) in s.pi.iter().zip(expect) {
            assert!((p - e).abs() < 1e-12, "{:?}", s.pi);
        }
    }

    #[test]
    fn infeasible_system() {
        // x + y = 1, x + y = 2
        let p = sf(2, 2, &[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0], &[0.0, 0.0]);
        assert_eq!(solve(&p, None).status, StdStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        // min -x, x - y = 0
        let p = sf(1, 2, &[1.0, -1.0], &[0.0], &[-1.0, 0.0]);
        assert_eq!(solve(&p, None).status, StdStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // x + y = 1 twice, min x + 2y
        let p = sf(2, 2, &[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0], &[1.0, 2.0]);
        let s = solve(&p, None);
        assert_eq!(s.status, StdStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-12 && s.z[1].abs() < 1e-12);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let p = sf(
            3,
            5,
            &[
                1.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 2.0, 0.0, 1.0, 0.0, //
                3.0, 2.0, 0.0, 0.0, 1.0,
            ],
            &[4.0, 12.0, 18.0],
            &[-3.0, -5.0, 0.0, 0.0, 0.0],
        );
        assert_eq!(solve(&p, Some(1)).status, StdStatus::IterationLimit);
    }
}
