//! Two-phase dense tableau simplex with bounded variables.
//!
//! Variables may sit nonbasic at either bound; finite upper bounds are
//! handled in the ratio test (including bound flips) rather than as extra
//! rows. Pricing is Dantzig's rule, switching to Bland's rule after a stall
//! budget to guarantee termination on degenerate problems.

use super::{LinearProgram, LpSolution, LpStatus, RowSense, SimplexSolver};
use crate::error::{Error, Result};

const INF: f64 = f64::INFINITY;

/// How an original variable maps onto internal columns (all internal
/// columns live in `[0, u]`).
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = lo + col`
    Shift { col: usize, lo: f64 },
    /// `x = hi - col`
    Mirror { col: usize, hi: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    n_cols: usize,
    rows: Vec<Vec<f64>>,
    /// Upper bound of each internal column (lower bound is 0).
    upper: Vec<f64>,
    state: Vec<ColState>,
    /// Column barred from entering the basis (artificials in phase 2).
    barred: Vec<bool>,
    basis: Vec<usize>,
    /// Current value of the basic variable of each row.
    x_basic: Vec<f64>,
    /// Multiplier applied to each original row (scaling and sign flips);
    /// duals are recovered as `y = y_scaled * row_mult`.
    row_mult: Vec<f64>,
    /// Per-row column used for dual recovery: the slack where one exists,
    /// else the artificial, with its initial coefficient.
    recovery_col: Vec<usize>,
    recovery_sign: Vec<f64>,
    artificial_col: Vec<Option<usize>>,
}

enum PhaseOutcome {
    Converged,
    Unbounded,
}

pub(super) fn solve(lp: &LinearProgram, cfg: &SimplexSolver) -> Result<LpSolution> {
    match solve_once(lp, cfg, false) {
        Ok(sol) => Ok(sol),
        // One deterministic retry under Bland's rule from the start.
        Err(Error::NumericalBreakdown { .. }) => solve_once(lp, cfg, true),
        Err(e) => Err(e),
    }
}

fn solve_once(lp: &LinearProgram, cfg: &SimplexSolver, bland_only: bool) -> Result<LpSolution> {
    let (mut tab, var_map, phase1_costs) = build_tableau(lp);
    let budget = IterBudget::new(tab.m, tab.n_cols, bland_only);

    // Phase 1: minimize artificial infeasibility.
    if tab.artificial_col.iter().any(|a| a.is_some()) {
        match run_phase(&mut tab, &phase1_costs, cfg, budget)? {
            PhaseOutcome::Unbounded => {
                return Err(Error::NumericalBreakdown { tol: cfg.pivot_tol })
            }
            PhaseOutcome::Converged => {}
        }
        let infeas: f64 = (0..tab.m)
            .filter(|&i| tab.is_artificial(tab.basis[i]))
            .map(|i| tab.x_basic[i])
            .sum();
        if infeas > cfg.feas_tol * 10.0 {
            let bad_rows: Vec<usize> = (0..tab.m)
                .filter(|&i| tab.is_artificial(tab.basis[i]) && tab.x_basic[i] > cfg.feas_tol)
                .collect();
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                duals: Vec::new(),
                infeasible_rows: bad_rows,
            });
        }
        tab.retire_artificials(cfg.pivot_tol);
    }

    // Phase 2: the real objective.
    let mut phase2_costs = vec![0.0; tab.n_cols];
    apply_var_costs(lp, &var_map, &mut phase2_costs);
    let outcome = run_phase(&mut tab, &phase2_costs, cfg, budget)?;
    if matches!(outcome, PhaseOutcome::Unbounded) {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective: f64::NAN,
            duals: Vec::new(),
            infeasible_rows: Vec::new(),
        });
    }

    let x = extract_x(lp, &tab, &var_map);
    let duals = extract_duals(&tab, &phase2_costs);
    let objective = lp.costs().iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();

    let sol = LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
        infeasible_rows: Vec::new(),
    };
    if certify(lp, &sol, cfg) {
        Ok(sol)
    } else {
        Err(Error::NumericalBreakdown { tol: cfg.pivot_tol })
    }
}

#[derive(Clone, Copy)]
struct IterBudget {
    bland_after: usize,
    max_iters: usize,
}

impl IterBudget {
    fn new(m: usize, n: usize, bland_only: bool) -> Self {
        let size = m + n;
        Self {
            bland_after: if bland_only { 0 } else { 50 * size + 1000 },
            max_iters: 400 * size + 20_000,
        }
    }
}

fn build_tableau(lp: &LinearProgram) -> (Tableau, Vec<VarMap>, Vec<f64>) {
    let m = lp.n_rows();

    // Map original variables onto shifted/mirrored/split columns.
    let mut var_map = Vec::with_capacity(lp.n_vars());
    let mut upper: Vec<f64> = Vec::new();
    for j in 0..lp.n_vars() {
        let (lo, hi) = lp.bounds(j);
        if lo.is_finite() {
            var_map.push(VarMap::Shift {
                col: upper.len(),
                lo,
            });
            upper.push(if hi.is_finite() { hi - lo } else { INF });
        } else if hi.is_finite() {
            var_map.push(VarMap::Mirror {
                col: upper.len(),
                hi,
            });
            upper.push(INF);
        } else {
            var_map.push(VarMap::Split {
                pos: upper.len(),
                neg: upper.len() + 1,
            });
            upper.push(INF);
            upper.push(INF);
        }
    }
    let n_structural = upper.len();

    // Structural part of each row, with the rhs shifted by bound offsets.
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; n_structural]; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let (coeffs, _, b) = lp.row(i);
        let mut r = b;
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shift { col, lo } => {
                    rows[i][col] += a;
                    r -= a * lo;
                }
                VarMap::Mirror { col, hi } => {
                    rows[i][col] -= a;
                    r -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    rows[i][pos] += a;
                    rows[i][neg] -= a;
                }
            }
        }
        rhs[i] = r;
    }

    // Row equilibration.
    let mut row_mult = vec![1.0; m];
    for i in 0..m {
        let maxabs = rows[i]
            .iter()
            .fold(0.0_f64, |acc, a| acc.max(a.abs()))
            .max(rhs[i].abs());
        if maxabs > 0.0 {
            let s = 1.0 / maxabs;
            for a in rows[i].iter_mut() {
                *a *= s;
            }
            rhs[i] *= s;
            row_mult[i] = s;
        }
    }

    // Slack columns, then sign normalization so every starting basic column
    // has coefficient +1 and a non-negative rhs.
    let mut slack_col = vec![None; m];
    let mut slack_coef = vec![0.0; m];
    let mut next_col = n_structural;
    for i in 0..m {
        let (_, sense, _) = lp.row(i);
        if sense != RowSense::Eq {
            slack_col[i] = Some(next_col);
            slack_coef[i] = if sense == RowSense::Le { 1.0 } else { -1.0 };
            next_col += 1;
        }
    }
    let slack_end = next_col;

    let mut needs_artificial = vec![false; m];
    for i in 0..m {
        let slack_feasible = match slack_coef[i] {
            1.0 => rhs[i] >= 0.0,
            -1.0 => rhs[i] <= 0.0,
            _ => false,
        };
        let negate = if slack_feasible {
            slack_coef[i] < 0.0
        } else {
            needs_artificial[i] = true;
            rhs[i] < 0.0
        };
        if negate {
            for a in rows[i].iter_mut() {
                *a = -*a;
            }
            rhs[i] = -rhs[i];
            row_mult[i] = -row_mult[i];
            slack_coef[i] = -slack_coef[i];
        }
    }
    let mut artificial_col = vec![None; m];
    for i in 0..m {
        if needs_artificial[i] {
            artificial_col[i] = Some(next_col);
            next_col += 1;
        }
    }
    let n_cols = next_col;

    // Assemble the dense tableau.
    let mut tableau_rows = vec![vec![0.0; n_cols]; m];
    for i in 0..m {
        tableau_rows[i][..n_structural].copy_from_slice(&rows[i]);
        if let Some(sc) = slack_col[i] {
            tableau_rows[i][sc] = slack_coef[i];
        }
        if let Some(ac) = artificial_col[i] {
            tableau_rows[i][ac] = 1.0;
        }
    }

    let mut upper_all = upper;
    upper_all.resize(n_cols, INF);
    let mut state = vec![ColState::AtLower; n_cols];
    let mut basis = vec![usize::MAX; m];
    let mut x_basic = vec![0.0; m];
    for i in 0..m {
        let b_col = artificial_col[i].unwrap_or_else(|| slack_col[i].expect("row has a basis"));
        basis[i] = b_col;
        state[b_col] = ColState::Basic;
        x_basic[i] = rhs[i];
    }

    // Dual recovery columns: prefer the slack, fall back to the artificial.
    let mut recovery_col = vec![0usize; m];
    let mut recovery_sign = vec![1.0; m];
    for i in 0..m {
        if let Some(sc) = slack_col[i] {
            recovery_col[i] = sc;
            recovery_sign[i] = slack_coef[i];
        } else {
            recovery_col[i] = artificial_col[i].expect("eq rows carry an artificial");
        }
    }

    let mut phase1_costs = vec![0.0; n_cols];
    for c in phase1_costs.iter_mut().take(n_cols).skip(slack_end) {
        *c = 1.0;
    }

    let tab = Tableau {
        m,
        n_cols,
        rows: tableau_rows,
        upper: upper_all,
        state,
        barred: vec![false; n_cols],
        basis,
        x_basic,
        row_mult,
        recovery_col,
        recovery_sign,
        artificial_col,
    };
    (tab, var_map, phase1_costs)
}

impl Tableau {
    fn is_artificial(&self, col: usize) -> bool {
        self.artificial_col.iter().flatten().any(|&a| a == col)
    }

    /// After phase 1: pivot zero-valued basic artificials onto ordinary
    /// columns where possible, then freeze all artificials at zero.
    fn retire_artificials(&mut self, pivot_tol: f64) {
        let art_start = self
            .artificial_col
            .iter()
            .flatten()
            .copied()
            .min()
            .unwrap_or(self.n_cols);
        for r in 0..self.m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let pivot_j = (0..art_start)
                .find(|&j| self.state[j] == ColState::AtLower && self.rows[r][j].abs() > pivot_tol);
            if let Some(j) = pivot_j {
                let old = self.basis[r];
                self.pivot(r, j);
                self.state[old] = ColState::AtLower;
                self.state[j] = ColState::Basic;
                self.basis[r] = j;
                // Degenerate swap at value zero: the point is unchanged.
                self.x_basic[r] = 0.0;
            }
        }
        for &ac in self.artificial_col.iter().flatten() {
            self.barred[ac] = true;
            self.upper[ac] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.rows[r][j];
        let inv = 1.0 / piv;
        for a in self.rows[r].iter_mut() {
            *a *= inv;
        }
        self.rows[r][j] = 1.0;
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (a, p) in row.iter_mut().zip(&pivot_row) {
                    *a -= f * p;
                }
                row[j] = 0.0;
            }
        }
        self.rows[r] = pivot_row;
    }
}

fn run_phase(
    tab: &mut Tableau,
    costs: &[f64],
    cfg: &SimplexSolver,
    budget: IterBudget,
) -> Result<PhaseOutcome> {
    // Reduced costs from scratch for this phase's objective.
    let mut d = costs.to_vec();
    for i in 0..tab.m {
        let cb = costs[tab.basis[i]];
        if cb != 0.0 {
            for (dj, a) in d.iter_mut().zip(&tab.rows[i]) {
                *dj -= cb * a;
            }
        }
    }

    let mut iters = 0usize;
    loop {
        iters += 1;
        if iters > budget.max_iters {
            return Err(Error::NumericalBreakdown { tol: cfg.pivot_tol });
        }
        let bland = iters > budget.bland_after;

        // Entering column: most violating reduced cost, or lowest index
        // under Bland's rule.
        let mut enter: Option<(usize, f64)> = None;
        for j in 0..tab.n_cols {
            if tab.barred[j] || tab.state[j] == ColState::Basic || tab.upper[j] == 0.0 {
                continue;
            }
            let viol = match tab.state[j] {
                ColState::AtLower => -d[j],
                ColState::AtUpper => d[j],
                ColState::Basic => unreachable!(),
            };
            if viol > cfg.opt_tol {
                match enter {
                    None => enter = Some((j, viol)),
                    Some((_, best)) if viol > best => enter = Some((j, viol)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
        }
        let Some((j, _)) = enter else {
            return Ok(PhaseOutcome::Converged);
        };
        let sigma = if tab.state[j] == ColState::AtLower {
            1.0
        } else {
            -1.0
        };

        // Ratio test over basic rows plus the entering variable's own span.
        let mut t_best = tab.upper[j];
        let mut leave: Option<(usize, bool)> = None; // (row, leaves_at_upper)
        for i in 0..tab.m {
            let w = sigma * tab.rows[i][j];
            let candidate = if w > cfg.pivot_tol {
                Some((tab.x_basic[i].max(0.0) / w, false))
            } else if w < -cfg.pivot_tol && tab.upper[tab.basis[i]].is_finite() {
                let span = (tab.upper[tab.basis[i]] - tab.x_basic[i]).max(0.0);
                Some((span / (-w), true))
            } else {
                None
            };
            if let Some((t, at_upper)) = candidate {
                let better = t < t_best - 1e-12;
                let tie = (t - t_best).abs() <= 1e-12
                    && leave.is_some_and(|(r, _)| tab.basis[i] < tab.basis[r]);
                if better || tie {
                    t_best = t;
                    leave = Some((i, at_upper));
                }
            }
        }

        if t_best.is_infinite() {
            return Ok(PhaseOutcome::Unbounded);
        }

        match leave {
            None => {
                // Bound flip: j runs across its whole span.
                let span = tab.upper[j];
                for i in 0..tab.m {
                    tab.x_basic[i] -= span * sigma * tab.rows[i][j];
                }
                tab.state[j] = match tab.state[j] {
                    ColState::AtLower => ColState::AtUpper,
                    ColState::AtUpper => ColState::AtLower,
                    ColState::Basic => unreachable!(),
                };
            }
            Some((r, leaves_at_upper)) => {
                let entering_value = if sigma > 0.0 {
                    t_best
                } else {
                    tab.upper[j] - t_best
                };
                for i in 0..tab.m {
                    if i != r {
                        tab.x_basic[i] -= t_best * sigma * tab.rows[i][j];
                    }
                }
                let old = tab.basis[r];
                tab.state[old] = if leaves_at_upper {
                    ColState::AtUpper
                } else {
                    ColState::AtLower
                };
                tab.pivot(r, j);
                // Keep reduced costs in step with the pivot.
                let f = d[j];
                if f != 0.0 {
                    for (dj, a) in d.iter_mut().zip(&tab.rows[r]) {
                        *dj -= f * a;
                    }
                    d[j] = 0.0;
                }
                tab.basis[r] = j;
                tab.state[j] = ColState::Basic;
                tab.x_basic[r] = entering_value;
            }
        }
    }
}

fn apply_var_costs(lp: &LinearProgram, var_map: &[VarMap], out: &mut [f64]) {
    for (j, &c) in lp.costs().iter().enumerate() {
        match var_map[j] {
            VarMap::Shift { col, .. } => out[col] += c,
            VarMap::Mirror { col, .. } => out[col] -= c,
            VarMap::Split { pos, neg } => {
                out[pos] += c;
                out[neg] -= c;
            }
        }
    }
}

fn internal_value(tab: &Tableau, col: usize) -> f64 {
    match tab.state[col] {
        ColState::Basic => {
            let r = tab.basis.iter().position(|&b| b == col).expect("basic col");
            tab.x_basic[r]
        }
        ColState::AtLower => 0.0,
        ColState::AtUpper => tab.upper[col],
    }
}

fn extract_x(lp: &LinearProgram, tab: &Tableau, var_map: &[VarMap]) -> Vec<f64> {
    (0..lp.n_vars())
        .map(|j| {
            let raw = match var_map[j] {
                VarMap::Shift { col, lo } => lo + internal_value(tab, col),
                VarMap::Mirror { col, hi } => hi - internal_value(tab, col),
                VarMap::Split { pos, neg } => internal_value(tab, pos) - internal_value(tab, neg),
            };
            let (lo, hi) = lp.bounds(j);
            raw.clamp(lo, hi)
        })
        .collect()
}

fn extract_duals(tab: &Tableau, costs: &[f64]) -> Vec<f64> {
    // Reduced cost of row i's recovery column gives the scaled dual.
    let mut d = costs.to_vec();
    for i in 0..tab.m {
        let cb = costs[tab.basis[i]];
        if cb != 0.0 {
            for (dj, a) in d.iter_mut().zip(&tab.rows[i]) {
                *dj -= cb * a;
            }
        }
    }
    (0..tab.m)
        .map(|i| {
            let y_scaled = -d[tab.recovery_col[i]] / tab.recovery_sign[i];
            y_scaled * tab.row_mult[i]
        })
        .collect()
}

fn certify(lp: &LinearProgram, sol: &LpSolution, cfg: &SimplexSolver) -> bool {
    let b_inf = (0..lp.n_rows())
        .map(|i| lp.row(i).2.abs())
        .fold(0.0_f64, f64::max);
    let feas_budget = cfg.feas_tol * (1.0 + b_inf);

    for i in 0..lp.n_rows() {
        let (coeffs, sense, b) = lp.row(i);
        let ax: f64 = coeffs.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
        let viol = match sense {
            RowSense::Le => ax - b,
            RowSense::Ge => b - ax,
            RowSense::Eq => (ax - b).abs(),
        };
        if viol > feas_budget {
            return false;
        }
    }

    // Dual feasibility of reduced costs in the original space, plus the
    // duality gap, which aggregates complementary slackness.
    let scale = 1.0 + sol.objective.abs();
    let slack_tol = 1e-6 * scale;
    let mut dual_obj: f64 = (0..lp.n_rows())
        .map(|i| sol.duals[i] * lp.row(i).2)
        .sum();
    for j in 0..lp.n_vars() {
        let mut dj = lp.costs()[j];
        for i in 0..lp.n_rows() {
            let a = lp.row(i).0[j];
            if a != 0.0 {
                dj -= sol.duals[i] * a;
            }
        }
        let (lo, hi) = lp.bounds(j);
        if dj > slack_tol {
            if lo.is_finite() {
                dual_obj += dj * lo;
            } else {
                return false;
            }
        } else if dj < -slack_tol {
            if hi.is_finite() {
                dual_obj += dj * hi;
            } else {
                return false;
            }
        }
    }
    (sol.objective - dual_obj).abs() <= 1e-6 * scale
}
