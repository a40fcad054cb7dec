//! Self-contained dense linear-programming layer.
//!
//! [`LinearProgram`] carries a minimization problem with per-row senses and
//! per-variable bounds. [`solve`] runs the bundled two-phase simplex; the
//! [`LpSolver`] trait is the seam through which an external solver could be
//! swapped in without touching any calling code.
//!
//! A plain-text dump format is available for debugging via
//! [`LinearProgram::dump`]: one `min:` objective line, one line per
//! constraint (`r<i>: <coeff> x<j> ... <sense> <rhs>`), then one `bounds:`
//! line per variable.

mod simplex;

pub mod oracle;

use crate::error::{Error, Result};

/// Constraint row sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        }
    }
}

/// A dense minimization LP: `min c'x` subject to `A x {<=,=,>=} b` and
/// `lo <= x <= hi`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n_vars: usize,
    costs: Vec<f64>,
    rows: Vec<Vec<f64>>,
    senses: Vec<RowSense>,
    rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LinearProgram {
    /// A problem over `n_vars` variables, all with cost 0 and bounds `[0, inf)`.
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            costs: vec![0.0; n_vars],
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lo: vec![0.0; n_vars],
            hi: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.costs[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lo[var] = lo;
        self.hi[var] = hi;
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn row(&self, i: usize) -> (&[f64], RowSense, f64) {
        (&self.rows[i], self.senses[i], self.rhs[i])
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lo[var], self.hi[var])
    }

    /// Adds a dense row; returns its index.
    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> usize {
        assert_eq!(coeffs.len(), self.n_vars, "row width mismatch");
        self.rows.push(coeffs);
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    /// Adds a row given as `(var, coeff)` terms; returns its index.
    pub fn add_sparse_row(&mut self, terms: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.n_vars];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add_row(coeffs, sense, rhs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Error::InvalidInput {
            what: "LinearProgram",
            why,
        };
        for (j, (&l, &h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if l.is_nan() || h.is_nan() || l == f64::INFINITY || h == f64::NEG_INFINITY {
                return Err(bad(format!("bounds of x{j} are not an interval")));
            }
            if l > h {
                return Err(bad(format!("bounds of x{j} cross: {l} > {h}")));
            }
        }
        if self.costs.iter().any(|c| !c.is_finite()) {
            return Err(bad("non-finite cost entry".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.iter().any(|a| !a.is_finite()) || !self.rhs[i].is_finite() {
                return Err(bad(format!("non-finite entry in row {i}")));
            }
        }
        Ok(())
    }

    /// Plain-text dump: objective, one constraint per line, then bounds.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        fn terms(coeffs: &[f64]) -> String {
            let mut out = String::new();
            let mut first = true;
            for (j, &a) in coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                if first {
                    let _ = write!(out, "{a} x{j}");
                    first = false;
                } else if a < 0.0 {
                    let _ = write!(out, " - {} x{j}", -a);
                } else {
                    let _ = write!(out, " + {a} x{j}");
                }
            }
            if first {
                out.push('0');
            }
            out
        }

        let mut out = String::new();
        let _ = writeln!(out, "min: {}", terms(&self.costs));
        for i in 0..self.rows.len() {
            let _ = writeln!(
                out,
                "r{i}: {} {} {}",
                terms(&self.rows[i]),
                self.senses[i].symbol(),
                self.rhs[i]
            );
        }
        for j in 0..self.n_vars {
            let _ = writeln!(out, "bounds: {} <= x{j} <= {}", self.lo[j], self.hi[j]);
        }
        out
    }
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solution of a [`LinearProgram`].
///
/// `x`, `objective` and `duals` are meaningful only when `status` is
/// [`LpStatus::Optimal`]; `infeasible_rows` lists offending rows when the
/// problem is infeasible.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub infeasible_rows: Vec<usize>,
}

/// Solver seam: the planner and simulator only depend on this trait.
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution>;
}

/// The bundled dense two-phase simplex with bounded variables, Dantzig
/// pricing, and Bland's rule as the anti-cycling fallback.
#[derive(Debug, Clone)]
pub struct SimplexSolver {
    /// Absolute primal feasibility tolerance after row scaling.
    pub feas_tol: f64,
    /// Reduced-cost optimality tolerance.
    pub opt_tol: f64,
    /// Pivot elements at or below this magnitude are treated as zero.
    pub pivot_tol: f64,
}

impl Default for SimplexSolver {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-9,
            pivot_tol: 1e-10,
        }
    }
}

impl LpSolver for SimplexSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        lp.validate()?;
        simplex::solve(lp, self)
    }
}

/// Solves with the default bundled simplex.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    SimplexSolver::default().solve(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_x_up_to_one() {
        // max x s.t. x <= 1 written as min -x.
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        lp.add_row(vec![1.0], RowSense::Le, 1.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.objective - (-1.0)).abs() < 1e-9);
    }

    #[test]
    fn simplex_edge_objective() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -1.0);
        lp.set_cost(1, -1.0);
        lp.add_row(vec![1.0, 1.0], RowSense::Le, 1.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - (-1.0)).abs() < 1e-9);
        assert!((sol.x[0] + sol.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_bounds_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![1.0], RowSense::Ge, 2.0);
        lp.add_row(vec![1.0], RowSense::Le, 1.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        assert!(!sol.infeasible_rows.is_empty());
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_duals() {
        // min x + y s.t. x + y = 2, x - y = 0 -> x = y = 1.
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.set_cost(1, 1.0);
        lp.add_row(vec![1.0, 1.0], RowSense::Eq, 2.0);
        lp.add_row(vec![1.0, -1.0], RowSense::Eq, 0.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 1.0).abs() < 1e-9);
        // Dual of the first row prices the resource: y0 = 1, y1 = 0.
        assert!((sol.duals[0] - 1.0).abs() < 1e-7);
        assert!(sol.duals[1].abs() < 1e-7);
    }

    #[test]
    fn upper_bounds_without_rows() {
        // min -x - 2y with x <= 3, y <= 2 as variable bounds, x + y <= 4.
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -1.0);
        lp.set_cost(1, -2.0);
        lp.set_bounds(0, 0.0, 3.0);
        lp.set_bounds(1, 0.0, 2.0);
        lp.add_row(vec![1.0, 1.0], RowSense::Le, 4.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[1] - 2.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.objective - (-6.0)).abs() < 1e-9);
    }

    #[test]
    fn fixed_variable_bound() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.set_bounds(1, 2.5, 2.5);
        lp.add_row(vec![1.0, 1.0], RowSense::Ge, 4.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[1] - 2.5).abs() < 1e-9);
        assert!((sol.x[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn negative_lower_bound() {
        // min x with x >= -5 and x + 3 >= 0.
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, 1.0);
        lp.set_bounds(0, -5.0, f64::INFINITY);
        lp.add_row(vec![1.0], RowSense::Ge, -3.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - (-3.0)).abs() < 1e-9);
    }

    #[test]
    fn dump_layout() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.5);
        lp.set_cost(1, -2.0);
        lp.set_bounds(1, 0.0, 4.0);
        lp.add_row(vec![1.0, 1.0], RowSense::Le, 10.0);
        let text = lp.dump();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "min: 1.5 x0 - 2 x1");
        assert_eq!(lines[1], "r0: 1 x0 + 1 x1 <= 10");
        assert_eq!(lines[2], "bounds: 0 <= x0 <= inf");
        assert_eq!(lines[3], "bounds: 0 <= x1 <= 4");
    }
}
