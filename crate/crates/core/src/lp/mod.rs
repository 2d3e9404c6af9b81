//! Small dense linear programming toolkit.
//!
//! A [`LinearProgram`] is `min c'x` over sign-constrained (or fixed)
//! variables and `<=`, `>=`, `=` rows. Solving runs a light presolve
//! (fixed variables, implied slack columns), then solves either the reduced
//! problem or its dual, whichever has fewer rows, with the dense simplex in
//! [`simplex`]. Primal values are recovered from the dual's multipliers when
//! the dual route is taken.

mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use simplex::{StandardForm, StdStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarBound {
    Free,
    NonNeg,
    NonPos,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Constraint { coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("malformed linear program: {0}")]
    Malformed(&'static str),
    #[error("simplex returned a point violating the constraints by {0:e}")]
    Numerical(f64),
}

/// Accepted constraint violation, relative to the largest right-hand side.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Which problem the simplex is run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Route {
    /// The smaller of primal and dual by row count.
    #[default]
    Auto,
    Primal,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub bounds: Vec<VarBound>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            bounds: vec![VarBound::Free; num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, sense, rhs));
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation over rows and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(b, &v)| match *b {
                VarBound::Free => 0.0,
                VarBound::NonNeg => (-v).max(0.0),
                VarBound::NonPos => v.max(0.0),
                VarBound::Fixed(f) => (v - f).abs(),
            })
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    fn check(&self) -> Result<(), LpError> {
        if self.bounds.len() != self.objective.len() {
            return Err(LpError::Malformed("bounds and objective lengths differ"));
        }
        let n = self.num_vars();
        for c in &self.constraints {
            if c.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) || !c.rhs.is_finite() {
                return Err(LpError::Malformed("constraint references bad variable or value"));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective"));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.solve_with(Route::Auto)
    }

    /// Solves along `route`. Every answer is checked against the original
    /// constraints; under [`Route::Auto`] a failed check retries along the
    /// other route.
    pub fn solve_with(&self, route: Route) -> Result<LpSolution, LpError> {
        self.check()?;
        let reduced = Presolved::new(self)?;
        let canon = &reduced.canonical;
        let first_dual = match route {
            Route::Auto => canon.rows.len() > canon.signs.len(),
            Route::Primal => false,
            Route::Dual => true,
        };
        let attempt = |dual: bool| -> Result<LpSolution, LpError> {
            let (xr, iterations) = if dual {
                match canon.solve_via_dual() {
                    Ok(v) => v,
                    // Dual infeasible leaves primal infeasible vs unbounded open.
                    Err(LpError::Infeasible) => canon.solve_primal()?,
                    Err(e) => return Err(e),
                }
            } else {
                canon.solve_primal()?
            };
            let x = reduced.postsolve(&xr);
            let violation = self.max_violation(&x);
            if violation > FEASIBILITY_TOL * self.rhs_scale() {
                return Err(LpError::Numerical(violation));
            }
            let objective = self.objective_value(&x);
            Ok(LpSolution {
                x,
                objective,
                iterations,
            })
        };
        match attempt(first_dual) {
            Err(e @ (LpError::Numerical(_) | LpError::IterationLimit)) if route == Route::Auto => {
                log::debug!("retrying LP along the other route: {e}");
                attempt(!first_dual)
            }
            other => other,
        }
    }

    fn rhs_scale(&self) -> f64 {
        1.0 + self
            .constraints
            .iter()
            .map(|c| c.rhs.abs())
            .chain(self.bounds.iter().map(|b| match *b {
                VarBound::Fixed(v) => v.abs(),
                _ => 0.0,
            }))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sign {
    Free,
    NonNeg,
    NonPos,
}

/// Dense problem over sign-constrained variables only.
#[derive(Debug, Clone)]
struct Canonical {
    c: Vec<f64>,
    signs: Vec<Sign>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
}

impl Canonical {
    fn to_standard(&self) -> (StandardForm, Vec<(usize, f64)>, Vec<f64>) {
        // Structural columns.
        let mut col_map: Vec<(usize, f64)> = Vec::new(); // (canonical var, sign)
        for (k, s) in self.signs.iter().enumerate() {
            match s {
                Sign::NonNeg => col_map.push((k, 1.0)),
                Sign::NonPos => col_map.push((k, -1.0)),
                Sign::Free => {
                    col_map.push((k, 1.0));
                    col_map.push((k, -1.0));
                }
            }
        }
        let structural = col_map.len();
        let mirrors = (1..structural)
            .filter(|&j| col_map[j].0 == col_map[j - 1].0)
            .map(|j| (j - 1, j))
            .collect();
        let slacks = self.rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let cols = structural + slacks;
        let m = self.rows.len();
        let mut a = vec![0.0; m * cols];
        let mut b = vec![0.0; m];
        let mut flips = vec![1.0; m];
        let mut slack = structural;
        for (r, (coef, sense, rhs)) in self.rows.iter().enumerate() {
            let row = &mut a[r * cols..(r + 1) * cols];
            for (j, &(k, s)) in col_map.iter().enumerate() {
                row[j] = s * coef[k];
            }
            match sense {
                Sense::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                }
                Sense::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                }
                Sense::Eq => {}
            }
            b[r] = *rhs;
            if *rhs < 0.0 {
                flips[r] = -1.0;
                b[r] = -rhs;
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
        }
        let mut c = vec![0.0; cols];
        for (j, &(k, s)) in col_map.iter().enumerate() {
            c[j] = s * self.c[k];
        }
        (
            StandardForm {
                rows: m,
                cols,
                a,
                b,
                c,
                mirrors,
            },
            col_map,
            flips,
        )
    }

    fn map_status(status: StdStatus) -> LpError {
        match status {
            StdStatus::Infeasible => LpError::Infeasible,
            StdStatus::Unbounded => LpError::Unbounded,
            StdStatus::IterationLimit | StdStatus::Optimal => LpError::IterationLimit,
        }
    }

    fn solve_primal(&self) -> Result<(Vec<f64>, usize), LpError> {
        let (sf, col_map, _) = self.to_standard();
        let sol = simplex::solve(&sf, None);
        if sol.status != StdStatus::Optimal {
            return Err(Self::map_status(sol.status));
        }
        let mut x = vec![0.0; self.signs.len()];
        for (j, &(k, s)) in col_map.iter().enumerate() {
            x[k] += s * sol.z[j];
        }
        Ok((x, sol.iterations))
    }

    /// Dual of `min c'x` as another minimization:
    /// `min -b'u` subject to one row per primal variable.
    fn dual(&self) -> Canonical {
        let n = self.signs.len();
        let m = self.rows.len();
        let signs = self
            .rows
            .iter()
            .map(|(_, sense, _)| match sense {
                Sense::Ge => Sign::NonNeg,
                Sense::Le => Sign::NonPos,
                Sense::Eq => Sign::Free,
            })
            .collect();
        let c = self.rows.iter().map(|(_, _, rhs)| -rhs).collect();
        let rows = (0..n)
            .map(|k| {
                let coef: Vec<f64> = (0..m).map(|r| self.rows[r].0[k]).collect();
                let sense = match self.signs[k] {
                    Sign::NonNeg => Sense::Le,
                    Sign::NonPos => Sense::Ge,
                    Sign::Free => Sense::Eq,
                };
                (coef, sense, self.c[k])
            })
            .collect();
        Canonical { c, signs, rows }
    }

    fn solve_via_dual(&self) -> Result<(Vec<f64>, usize), LpError> {
        let dual = self.dual();
        let (sf, _, flips) = dual.to_standard();
        let sol = simplex::solve(&sf, None);
        match sol.status {
            StdStatus::Optimal => {}
            StdStatus::Unbounded => return Err(LpError::Infeasible),
            StdStatus::Infeasible => return Err(LpError::Infeasible),
            StdStatus::IterationLimit => return Err(LpError::IterationLimit),
        }
        // Primal values are the negated multipliers of the dual rows.
        let x = sol.pi.iter().zip(&flips).map(|(p, f)| -p * f).collect();
        Ok((x, sol.iterations))
    }
}

/// Presolved problem plus the bookkeeping to map a solution back.
struct Presolved {
    canonical: Canonical,
    n_orig: usize,
    /// Original index of each canonical variable.
    kept: Vec<usize>,
    fixed: Vec<(usize, f64)>,
    /// Eliminated implied slacks, in elimination order:
    /// `x_s = (rhs - sum a_j x_j) / a_s`.
    slacks: Vec<(usize, f64, Vec<(usize, f64)>, f64)>,
}

impl Presolved {
    fn new(lp: &LinearProgram) -> Result<Presolved, LpError> {
        let n = lp.num_vars();
        let mut fixed = Vec::new();
        let mut value = vec![None; n];
        for (j, b) in lp.bounds.iter().enumerate() {
            if let VarBound::Fixed(v) = *b {
                if !v.is_finite() {
                    return Err(LpError::Malformed("non-finite fixed value"));
                }
                value[j] = Some(v);
                fixed.push((j, v));
            }
        }

        // Merge duplicate entries and substitute fixed variables.
        let mut rows: Vec<(Vec<(usize, f64)>, Sense, f64)> = Vec::with_capacity(lp.constraints.len());
        for c in &lp.constraints {
            let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(c.coeffs.len());
            let mut rhs = c.rhs;
            for &(j, a) in &c.coeffs {
                if let Some(v) = value[j] {
                    rhs -= a * v;
                } else if let Some(e) = coeffs.iter_mut().find(|e| e.0 == j) {
                    e.1 += a;
                } else {
                    coeffs.push((j, a));
                }
            }
            coeffs.retain(|&(_, a)| a != 0.0);
            rows.push((coeffs, c.sense, rhs));
        }

        // Implied slacks: a nonnegative variable appearing in exactly one
        // row, that row an equality.
        let mut count = vec![0usize; n];
        for (coeffs, _, _) in &rows {
            for &(j, _) in coeffs {
                count[j] += 1;
            }
        }
        let mut c = lp.objective.clone();
        let mut removed = vec![false; n];
        let mut slacks = Vec::new();
        for (coeffs, sense, rhs) in rows.iter_mut() {
            if *sense != Sense::Eq {
                continue;
            }
            let pick = coeffs
                .iter()
                .position(|&(j, _)| count[j] == 1 && lp.bounds[j] == VarBound::NonNeg && !removed[j]);
            let Some(pos) = pick else { continue };
            if coeffs.len() == 1 {
                continue;
            }
            let (s, a_s) = coeffs.remove(pos);
            // a_s x_s = rhs - rest, x_s >= 0
            *sense = if a_s > 0.0 { Sense::Le } else { Sense::Ge };
            let cs = c[s];
            if cs != 0.0 {
                for &(j, a) in coeffs.iter() {
                    c[j] -= cs * a / a_s;
                }
            }
            c[s] = 0.0;
            removed[s] = true;
            slacks.push((s, a_s, coeffs.clone(), *rhs));
        }

        let kept: Vec<usize> = (0..n).filter(|&j| value[j].is_none() && !removed[j]).collect();
        let mut position = vec![usize::MAX; n];
        for (k, &j) in kept.iter().enumerate() {
            position[j] = k;
        }
        let signs = kept
            .iter()
            .map(|&j| match lp.bounds[j] {
                VarBound::Free => Sign::Free,
                VarBound::NonNeg => Sign::NonNeg,
                VarBound::NonPos => Sign::NonPos,
                VarBound::Fixed(_) => unreachable!("fixed variables are substituted"),
            })
            .collect();

        let mut dense_rows = Vec::with_capacity(rows.len());
        for (coeffs, sense, rhs) in rows {
            if coeffs.is_empty() {
                let ok = match sense {
                    Sense::Le => 0.0 <= rhs + 1e-9,
                    Sense::Ge => 0.0 >= rhs - 1e-9,
                    Sense::Eq => rhs.abs() <= 1e-9,
                };
                if !ok {
                    return Err(LpError::Infeasible);
                }
                continue;
            }
            let mut dense = vec![0.0; kept.len()];
            for (j, a) in coeffs {
                dense[position[j]] += a;
            }
            dense_rows.push((dense, sense, rhs));
        }
        let canonical = Canonical {
            c: kept.iter().map(|&j| c[j]).collect(),
            signs,
            rows: dense_rows,
        };
        Ok(Presolved {
            canonical,
            n_orig: n,
            kept,
            fixed,
            slacks,
        })
    }

    fn postsolve(&self, xr: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_orig];
        for (k, &j) in self.kept.iter().enumerate() {
            x[j] = xr[k];
        }
        for &(j, v) in &self.fixed {
            x[j] = v;
        }
        for (s, a_s, rest, rhs) in self.slacks.iter().rev() {
            let act: f64 = rest.iter().map(|&(j, a)| a * x[j]).sum();
            x[*s] = ((rhs - act) / a_s).max(0.0);
        }
        x
    }
}
