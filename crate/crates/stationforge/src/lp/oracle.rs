//! Brute-force LP oracle for testing the simplex.
//!
//! Converts the problem to equality form with bounds expressed as extra
//! rows (deliberately a different path than the solver's native bound
//! handling), enumerates candidate bases by Gaussian elimination, and takes
//! the best basic feasible solution. Unboundedness is decided by searching
//! for an improving ray, i.e. a basic feasible point of
//! `{E d = 0, c'd = -1, d >= 0}`.
//!
//! Assumes a generically full-rank constraint matrix, which random test
//! instances satisfy. Input sizes are capped; this is a test oracle, not a
//! solver.

use super::{LinearProgram, LpStatus, RowSense};
use crate::error::{Error, Result};

const MAX_VARS: usize = 10;
const MAX_ROWS: usize = 16;
const MAX_BASES: u64 = 4_000_000;
const FEAS_TOL: f64 = 1e-9;

/// Result of exhaustive vertex enumeration.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub status: LpStatus,
    pub objective: Option<f64>,
    pub x: Option<Vec<f64>>,
}

struct EqForm {
    /// m_eq x n_eq coefficient matrix.
    mat: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    costs: Vec<f64>,
    cost_const: f64,
    n_structural: usize,
    shifts: Vec<f64>,
}

fn to_equality_form(lp: &LinearProgram) -> Result<EqForm> {
    let n = lp.n_vars();
    let mut shifts = Vec::with_capacity(n);
    for j in 0..n {
        let (lo, _) = lp.bounds(j);
        if !lo.is_finite() {
            return Err(Error::SizeLimit {
                n_vars: n,
                n_rows: lp.n_rows(),
            });
        }
        shifts.push(lo);
    }

    // Original rows plus one row per finite upper bound, all as Le/Eq over
    // the shifted variables.
    let mut le_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut eq_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..lp.n_rows() {
        let (coeffs, sense, b) = lp.row(i);
        let shifted_b = b - coeffs
            .iter()
            .zip(&shifts)
            .map(|(a, s)| a * s)
            .sum::<f64>();
        match sense {
            RowSense::Le => le_rows.push((coeffs.to_vec(), shifted_b)),
            RowSense::Ge => le_rows.push((coeffs.iter().map(|a| -a).collect(), -shifted_b)),
            RowSense::Eq => eq_rows.push((coeffs.to_vec(), shifted_b)),
        }
    }
    for j in 0..n {
        let (lo, hi) = lp.bounds(j);
        if hi.is_finite() {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            le_rows.push((row, hi - lo));
        }
    }

    let m_eq = le_rows.len() + eq_rows.len();
    let n_eq = n + le_rows.len();
    let mut mat = vec![vec![0.0; n_eq]; m_eq];
    let mut rhs = vec![0.0; m_eq];
    for (i, (row, b)) in le_rows.iter().enumerate() {
        mat[i][..n].copy_from_slice(row);
        mat[i][n + i] = 1.0; // slack
        rhs[i] = *b;
    }
    for (k, (row, b)) in eq_rows.iter().enumerate() {
        let i = le_rows.len() + k;
        mat[i][..n].copy_from_slice(row);
        rhs[i] = *b;
    }

    let mut costs = vec![0.0; n_eq];
    costs[..n].copy_from_slice(lp.costs());
    let cost_const = lp
        .costs()
        .iter()
        .zip(&shifts)
        .map(|(c, s)| c * s)
        .sum::<f64>();

    Ok(EqForm {
        mat,
        rhs,
        costs,
        cost_const,
        n_structural: n,
        shifts,
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
        if acc > MAX_BASES * 2 {
            return u64::MAX;
        }
    }
    acc
}

/// Solves the (rows x cols) system restricted to `cols` columns, requiring
/// consistency when overdetermined. Returns the basic values or None when
/// singular/inconsistent.
fn solve_subsystem(mat: &[Vec<f64>], rhs: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let m = mat.len();
    let k = cols.len();
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = cols.iter().map(|&j| mat[i][j]).collect();
            row.push(rhs[i]);
            row
        })
        .collect();

    let mut pivot_row = 0;
    for col in 0..k {
        let best = (pivot_row..m).max_by(|&p, &q| {
            a[p][col]
                .abs()
                .partial_cmp(&a[q][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[best][col].abs() < 1e-9 {
            return None; // rank-deficient in the chosen columns
        }
        a.swap(pivot_row, best);
        let inv = 1.0 / a[pivot_row][col];
        for x in a[pivot_row].iter_mut() {
            *x *= inv;
        }
        for i in 0..m {
            if i != pivot_row {
                let f = a[i][col];
                if f != 0.0 {
                    for c2 in col..=k {
                        let v = a[pivot_row][c2];
                        a[i][c2] -= f * v;
                    }
                }
            }
        }
        pivot_row += 1;
        if pivot_row == m {
            break;
        }
    }
    if pivot_row < k {
        return None;
    }
    // Overdetermined: remaining rows must be consistent.
    for row in a.iter().skip(k) {
        if row[k].abs() > 1e-7 {
            return None;
        }
    }
    Some((0..k).map(|i| a[i][k]).collect())
}

struct Combinations {
    idx: Vec<usize>,
    n: usize,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            idx: (0..k).collect(),
            n,
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        if k == 0 {
            self.done = true;
            return Some(out);
        }
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Exhaustively enumerates candidate bases and returns the exact optimum,
/// or detects infeasibility/unboundedness. Capped at 10 variables and 16
/// rows.
pub fn enumerate_vertices(lp: &LinearProgram) -> Result<OracleOutcome> {
    lp.validate()?;
    if lp.n_vars() > MAX_VARS || lp.n_rows() > MAX_ROWS {
        return Err(Error::SizeLimit {
            n_vars: lp.n_vars(),
            n_rows: lp.n_rows(),
        });
    }
    let eq = to_equality_form(lp)?;
    let m = eq.mat.len();
    let n = eq.mat[0].len();
    let basis_size = m.min(n);
    if binomial(n, basis_size) > MAX_BASES {
        return Err(Error::SizeLimit {
            n_vars: lp.n_vars(),
            n_rows: lp.n_rows(),
        });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for cols in Combinations::new(n, basis_size) {
        let Some(xb) = solve_subsystem(&eq.mat, &eq.rhs, &cols) else {
            continue;
        };
        if xb.iter().any(|&v| v < -FEAS_TOL) {
            continue;
        }
        let mut x_full = vec![0.0; n];
        for (slot, &j) in cols.iter().enumerate() {
            x_full[j] = xb[slot].max(0.0);
        }
        let obj = eq.cost_const
            + eq
                .costs
                .iter()
                .zip(&x_full)
                .map(|(c, v)| c * v)
                .sum::<f64>();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            let x_orig: Vec<f64> = (0..eq.n_structural)
                .map(|j| x_full[j] + eq.shifts[j])
                .collect();
            best = Some((obj, x_orig));
        }
    }

    let Some((objective, x)) = best else {
        return Ok(OracleOutcome {
            status: LpStatus::Infeasible,
            objective: None,
            x: None,
        });
    };

    if has_improving_ray(&eq)? {
        return Ok(OracleOutcome {
            status: LpStatus::Unbounded,
            objective: None,
            x: None,
        });
    }

    Ok(OracleOutcome {
        status: LpStatus::Optimal,
        objective: Some(objective),
        x: Some(x),
    })
}

/// Feasibility of `{E d = 0, c'd = -1, d >= 0}` decided by enumerating its
/// basic solutions.
fn has_improving_ray(eq: &EqForm) -> Result<bool> {
    let m = eq.mat.len() + 1;
    let n = eq.mat[0].len();
    let mut mat = eq.mat.clone();
    mat.push(eq.costs.clone());
    let mut rhs = vec![0.0; m];
    rhs[m - 1] = -1.0;

    let basis_size = m.min(n);
    if binomial(n, basis_size) > MAX_BASES {
        return Err(Error::SizeLimit {
            n_vars: eq.n_structural,
            n_rows: m,
        });
    }
    for cols in Combinations::new(n, basis_size) {
        if let Some(db) = solve_subsystem(&mat, &rhs, &cols) {
            if db.iter().all(|&v| v >= -FEAS_TOL) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve, LinearProgram, RowSense};

    #[test]
    fn oracle_matches_hand_solutions() {
        // max x s.t. x <= 1.
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        lp.add_row(vec![1.0], RowSense::Le, 1.0);
        let out = enumerate_vertices(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective.unwrap() - (-1.0)).abs() < 1e-9);

        // min -x-y s.t. x+y <= 1.
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -1.0);
        lp.set_cost(1, -1.0);
        lp.add_row(vec![1.0, 1.0], RowSense::Le, 1.0);
        let out = enumerate_vertices(&lp).unwrap();
        assert!((out.objective.unwrap() - (-1.0)).abs() < 1e-9);

        // x >= 2 and x <= 1 is infeasible.
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![1.0], RowSense::Ge, 2.0);
        lp.add_row(vec![1.0], RowSense::Le, 1.0);
        let out = enumerate_vertices(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
    }

    #[test]
    fn oracle_detects_unbounded() {
        // min -x with x >= 0 free above.
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        let out = enumerate_vertices(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
    }

    #[test]
    fn oracle_honors_caps() {
        let lp = LinearProgram::new(11);
        assert!(matches!(
            enumerate_vertices(&lp).unwrap_err(),
            Error::SizeLimit { .. }
        ));
    }

    #[test]
    fn oracle_and_simplex_agree_on_bounded_vars() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -1.0);
        lp.set_cost(1, -2.0);
        lp.set_bounds(0, 0.0, 3.0);
        lp.set_bounds(1, 0.0, 2.0);
        lp.add_row(vec![1.0, 1.0], RowSense::Le, 4.0);
        let oracle = enumerate_vertices(&lp).unwrap();
        let sol = solve(&lp).unwrap();
        assert_eq!(oracle.status, LpStatus::Optimal);
        assert!((oracle.objective.unwrap() - sol.objective).abs() < 1e-9);
    }
}
