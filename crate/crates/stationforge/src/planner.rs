//! Chance-constrained station sizing.
//!
//! Assembles the planning program over charger count `X`, charging profile
//! `P_t`, load shedding `P_t^loss`, interchange-shed plug-in power
//! `P_t^pitc`, and the billed grid peak `P_max^grid`; solves its
//! deterministic quantile reformulation; rounds the charger count up and
//! re-solves with it fixed to get consistent operating profiles and the
//! annualized cost breakdown.
//!
//! Stochastic bounds that appear inside cumulative sums (the plug-in energy
//! band) are reformulated through the distribution of the whole combination,
//! estimated sample-wise across scenarios, not through independent marginal
//! quantiles; the scenarios are the joint draws, so this keeps the
//! correlation between a day's plug-in power and its plug-in energy.

use serde::{Deserialize, Serialize};

use crate::chance::{ParamForm, ReliabilityLevel, StochasticParam};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lp::{LinearProgram, LpSolver, LpStatus, RowSense, SimplexSolver};
use crate::scenario::BoundDistributions;
use crate::session::ChargerSpec;

const ROUND_EPS: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

/// Annuity factor converting a capital cost into equal annual payments:
/// `r (1+r)^N / ((1+r)^N - 1)`.
pub fn capital_recovery_factor(discount_rate: f64, lifetime_years: u32) -> Result<f64> {
    if !(discount_rate > 0.0 && discount_rate.is_finite()) {
        return Err(Error::DomainError {
            what: "capital recovery discount rate",
            value: discount_rate,
        });
    }
    if lifetime_years == 0 {
        return Err(Error::DomainError {
            what: "capital recovery lifetime",
            value: 0.0,
        });
    }
    let growth = (1.0 + discount_rate).powi(lifetime_years as i32);
    Ok(discount_rate * growth / (growth - 1.0))
}

/// Cost inputs of the sizing model. All prices in USD; energy prices are
/// per grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParameters {
    /// Installed cost of one charger.
    pub c_charger_usd: f64,
    /// Capital recovery factor (1/yr), normally derived from
    /// `(discount_rate, lifetime_years)`.
    pub zeta_per_yr: f64,
    /// Time-of-use energy price per step (USD/kWh).
    pub c_energy_usd_per_kwh: Vec<f64>,
    /// Demand charge (USD per kW of monthly peak).
    pub c_demand_usd_per_kw_month: f64,
    /// Load-shedding penalty (USD/kWh).
    pub c_loss_usd_per_kwh: f64,
    /// Planning-side interchange price (USD per kWh of plug-in demand shed).
    pub c_itc_plan_usd_per_kwh: f64,
    /// Operation-side interchange price (USD per interchange event).
    pub c_itc_oper_usd_per_event: f64,
    pub discount_rate: f64,
    pub lifetime_years: u32,
}

impl CostParameters {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let bad = |why: String| Error::InvalidInput {
            what: "CostParameters",
            why,
        };
        if self.c_energy_usd_per_kwh.len() != grid.n_steps() {
            return Err(bad(format!(
                "energy price has {} entries, grid has {}",
                self.c_energy_usd_per_kwh.len(),
                grid.n_steps()
            )));
        }
        let all = [
            self.c_charger_usd,
            self.zeta_per_yr,
            self.c_demand_usd_per_kw_month,
            self.c_loss_usd_per_kwh,
            self.c_itc_plan_usd_per_kwh,
            self.c_itc_oper_usd_per_event,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0)
            || self.c_energy_usd_per_kwh.iter().any(|v| *v < 0.0)
        {
            return Err(bad("all prices must be finite and non-negative".into()));
        }
        let derived = capital_recovery_factor(self.discount_rate, self.lifetime_years)?;
        if (derived - self.zeta_per_yr).abs() > 1e-6 * derived.max(1.0) {
            return Err(bad(format!(
                "zeta {} inconsistent with (r={}, N={}) -> {}",
                self.zeta_per_yr, self.discount_rate, self.lifetime_years, derived
            )));
        }
        Ok(())
    }
}

/// Placeholder time-of-use price vector: 0.30 USD/kWh 12:00-18:00,
/// 0.18 USD/kWh 08:00-12:00 and 18:00-22:00, 0.12 USD/kWh otherwise.
pub fn tou_default_prices(grid: &TimeGrid) -> Vec<f64> {
    (0..grid.n_steps())
        .map(|k| {
            let h = grid.step_start_h(k) % 24.0;
            if (12.0..18.0).contains(&h) {
                0.30
            } else if (8.0..12.0).contains(&h) || (18.0..22.0).contains(&h) {
                0.18
            } else {
                0.12
            }
        })
        .collect()
}

/// The three study presets: no interchange, priced interchange, and
/// near-free robotic interchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CasePreset {
    Case0,
    Case1,
    Case2,
}

impl CasePreset {
    pub fn label(self) -> &'static str {
        match self {
            CasePreset::Case0 => "case0",
            CasePreset::Case1 => "case1",
            CasePreset::Case2 => "case2",
        }
    }

    pub fn interchange_enabled(self) -> bool {
        self != CasePreset::Case0
    }

    /// Cost parameters of the preset: $4000 per charger annualized at
    /// (6%, 15 yr); interchange at $0.44/event ($0.0167/kWh) for case 1 and
    /// $0.003/event (price per kWh scaled down in proportion) for case 2.
    pub fn cost_parameters(self, grid: &TimeGrid) -> CostParameters {
        let (c_itc_plan, c_itc_oper) = match self {
            CasePreset::Case0 => (0.0, 0.0),
            CasePreset::Case1 => (0.0167, 0.44),
            CasePreset::Case2 => (0.0167 * 0.003 / 0.44, 0.003),
        };
        let discount_rate = 0.06;
        let lifetime_years = 15;
        CostParameters {
            c_charger_usd: 4000.0,
            zeta_per_yr: capital_recovery_factor(discount_rate, lifetime_years).unwrap(),
            c_energy_usd_per_kwh: tou_default_prices(grid),
            c_demand_usd_per_kw_month: 15.0,
            c_loss_usd_per_kwh: 1.2,
            c_itc_plan_usd_per_kwh: c_itc_plan,
            c_itc_oper_usd_per_event: c_itc_oper,
            discount_rate,
            lifetime_years,
        }
    }
}

/// Transformer limits on the station's net draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridLimits {
    pub p_tran_min_kw: f64,
    pub p_tran_max_kw: f64,
}

impl Default for GridLimits {
    fn default() -> Self {
        Self {
            p_tran_min_kw: 0.0,
            p_tran_max_kw: 500.0,
        }
    }
}

impl GridLimits {
    pub fn validate(&self) -> Result<()> {
        if self.p_tran_min_kw > self.p_tran_max_kw {
            return Err(Error::InvalidInput {
                what: "GridLimits",
                why: format!(
                    "transformer bounds cross: {} > {}",
                    self.p_tran_min_kw, self.p_tran_max_kw
                ),
            });
        }
        Ok(())
    }
}

/// Everything the sizing model needs.
#[derive(Debug, Clone)]
pub struct PlanInputs<'a> {
    pub bounds: &'a BoundDistributions,
    pub charger: ChargerSpec,
    pub costs: &'a CostParameters,
    pub limits: GridLimits,
    pub epsilon: ReliabilityLevel,
    pub interchange_enabled: bool,
}

/// Deterministic per-step thresholds after reformulation.
#[derive(Debug, Clone)]
pub struct PlanThresholds {
    /// Band on `P_t + P_t^loss`.
    pub p_band: Vec<(f64, f64)>,
    /// Band on cumulative `(P + P^loss) eta dt`.
    pub e_band: Vec<(f64, f64)>,
    /// Per-step cap on `P_t^pitc`.
    pub pitc_cap: Vec<f64>,
    /// Cap on cumulative `P^pitc eta dt` (plug-in energy slack).
    pub pitc_cum_cap: Vec<f64>,
    /// Floor on the same cumulative quantity (normally zero).
    pub pitc_cum_floor: Vec<f64>,
    /// Confident aggregate plug-in power: drives the charger count.
    pub pp_hi_lower: Vec<f64>,
    /// Cautious aggregate plug-in power: caps simultaneous charging.
    pub pp_hi_upper: Vec<f64>,
    /// Transformer-implied bounds on `P_t`.
    pub p_floor: Vec<f64>,
    pub p_cap: Vec<f64>,
    /// Confident base load, entering the peak-tracking rows.
    pub base_low: Vec<f64>,
}

fn dl(p: &StochasticParam, eps: ReliabilityLevel) -> f64 {
    p.deterministic_lower(eps)
}

/// Upper thresholds of intrinsically non-negative quantities are clamped at
/// zero: the Gaussian fit can place a low quantile below the support of the
/// underlying bound.
fn du_pos(p: &StochasticParam, eps: ReliabilityLevel) -> f64 {
    p.deterministic_upper(eps).max(0.0)
}

/// Reformulates every stochastic bound at the requested reliability level.
pub fn reformulate(inputs: &PlanInputs) -> Result<PlanThresholds> {
    let b = inputs.bounds;
    let eps = inputs.epsilon;
    let grid = &b.grid;
    let n = grid.n_steps();
    let eta_dt = inputs.charger.eta * grid.dt_h();

    let mut th = PlanThresholds {
        p_band: Vec::with_capacity(n),
        e_band: Vec::with_capacity(n),
        pitc_cap: Vec::with_capacity(n),
        pitc_cum_cap: Vec::with_capacity(n),
        pitc_cum_floor: Vec::with_capacity(n),
        pp_hi_lower: Vec::with_capacity(n),
        pp_hi_upper: Vec::with_capacity(n),
        p_floor: Vec::with_capacity(n),
        p_cap: Vec::with_capacity(n),
        base_low: Vec::with_capacity(n),
    };

    // Sample-wise cumulative plug-in power, for the combination parameters
    // of the plug-in energy band.
    let n_samples = b.n_scenarios;
    let mut cum_pp = vec![0.0; n_samples];
    let form = b.pp_hi.first().map(|p| p.form()).unwrap_or(ParamForm::Gaussian);

    for t in 0..n {
        let p_lo = dl(&b.p_lo[t], eps);
        let p_hi = du_pos(&b.p_hi[t], eps);
        if p_lo > p_hi + PRUNE_TOL {
            return Err(Error::ModelError {
                t_index: t,
                family: "charging power band",
                lower: p_lo,
                upper: p_hi,
            });
        }
        th.p_band.push((p_lo, p_hi));

        let e_lo = dl(&b.e_lo[t], eps);
        let e_hi = du_pos(&b.e_hi[t], eps);
        if e_lo > e_hi + PRUNE_TOL {
            return Err(Error::ModelError {
                t_index: t,
                family: "charging energy band",
                lower: e_lo,
                upper: e_hi,
            });
        }
        th.e_band.push((e_lo, e_hi));

        th.pitc_cap.push(du_pos(&b.pp_hi[t], eps));
        th.pp_hi_lower.push(dl(&b.pp_hi[t], eps).max(0.0));
        th.pp_hi_upper.push(du_pos(&b.pp_hi[t], eps));

        // Plug-in energy band, via the distribution of
        //   b = e^p{lo,hi}_t - sum_{tau<=t} p^p+_tau eta dt
        // taken sample-wise across scenarios.
        let pp_samples = b.pp_hi[t].samples().ok_or(Error::InvalidInput {
            what: "BoundDistributions",
            why: "plug-in bounds must carry scenario samples".into(),
        })?;
        let ep_lo_samples = b.ep_lo[t].samples().expect("estimated families keep samples");
        let ep_hi_samples = b.ep_hi[t].samples().expect("estimated families keep samples");
        for (c, &p) in cum_pp.iter_mut().zip(pp_samples) {
            *c += p * eta_dt;
        }
        let deficit_lo: Vec<f64> = ep_lo_samples
            .iter()
            .zip(&cum_pp)
            .map(|(e, c)| e - c)
            .collect();
        let deficit_hi: Vec<f64> = ep_hi_samples
            .iter()
            .zip(&cum_pp)
            .map(|(e, c)| e - c)
            .collect();
        let cap = -StochasticParam::from_samples(deficit_lo, form)?.deterministic_lower(eps);
        let floor = -StochasticParam::from_samples(deficit_hi, form)?.deterministic_upper(eps);
        if floor > cap + 1e-6 {
            return Err(Error::ModelError {
                t_index: t,
                family: "plug-in energy band",
                lower: floor,
                upper: cap,
            });
        }
        th.pitc_cum_cap.push(cap.max(0.0));
        th.pitc_cum_floor.push(floor);

        let base_low = dl(&b.p_base[t], eps);
        let base_high = b.p_base[t].deterministic_upper(eps);
        let p_cap = inputs.limits.p_tran_max_kw - base_low;
        let p_floor = (inputs.limits.p_tran_min_kw - base_high).max(0.0);
        if p_floor > p_cap + PRUNE_TOL {
            return Err(Error::ModelError {
                t_index: t,
                family: "transformer band",
                lower: p_floor,
                upper: p_cap,
            });
        }
        th.p_floor.push(p_floor);
        th.p_cap.push(p_cap);
        th.base_low.push(base_low);
    }
    Ok(th)
}

/// Variable layout of the planning LP.
#[derive(Debug, Clone, Copy)]
pub struct PlanVars {
    n_steps: usize,
}

impl PlanVars {
    pub fn x(&self) -> usize {
        0
    }
    pub fn p(&self, t: usize) -> usize {
        1 + t
    }
    pub fn loss(&self, t: usize) -> usize {
        1 + self.n_steps + t
    }
    pub fn pitc(&self, t: usize) -> usize {
        1 + 2 * self.n_steps + t
    }
    pub fn peak(&self) -> usize {
        1 + 3 * self.n_steps
    }
    pub fn count(&self) -> usize {
        3 * self.n_steps + 2
    }
}

/// A built planning LP plus the metadata needed to read its solution.
pub struct PlanningProblem {
    pub lp: LinearProgram,
    pub vars: PlanVars,
    pub thresholds: PlanThresholds,
    pub row_tags: Vec<(&'static str, usize)>,
}

/// Assembles the sizing LP from reformulated thresholds.
pub fn build_planning_lp(inputs: &PlanInputs) -> Result<PlanningProblem> {
    let grid = &inputs.bounds.grid;
    inputs.costs.validate(grid)?;
    inputs.limits.validate()?;
    let th = reformulate(inputs)?;

    let n = grid.n_steps();
    let dt = grid.dt_h();
    let eta_dt = inputs.charger.eta * dt;
    let vars = PlanVars { n_steps: n };
    let mut lp = LinearProgram::new(vars.count());
    let mut tags: Vec<(&'static str, usize)> = Vec::new();

    // Objective: annualized capital, demand charge, and 365 days of energy,
    // shedding, and interchange operation.
    lp.set_cost(vars.x(), inputs.costs.zeta_per_yr * inputs.costs.c_charger_usd);
    lp.set_cost(vars.peak(), 12.0 * inputs.costs.c_demand_usd_per_kw_month);
    for t in 0..n {
        lp.set_cost(vars.p(t), 365.0 * inputs.costs.c_energy_usd_per_kwh[t] * dt);
        lp.set_cost(vars.loss(t), 365.0 * inputs.costs.c_loss_usd_per_kwh * dt);
        lp.set_cost(
            vars.pitc(t),
            365.0 * inputs.costs.c_itc_plan_usd_per_kwh * dt,
        );
    }

    // Bounds: transformer limits land directly on P_t; the per-step
    // plug-in cap lands on P_t^pitc.
    for t in 0..n {
        lp.set_bounds(vars.p(t), th.p_floor[t], th.p_cap[t]);
        let pitc_hi = if inputs.interchange_enabled {
            th.pitc_cap[t]
        } else {
            0.0
        };
        lp.set_bounds(vars.pitc(t), 0.0, pitc_hi);
    }

    for t in 0..n {
        // Power band on P + P^loss.
        let (p_lo, p_hi) = th.p_band[t];
        lp.add_sparse_row(
            &[(vars.p(t), 1.0), (vars.loss(t), 1.0)],
            RowSense::Le,
            p_hi,
        );
        tags.push(("charging power band", t));
        if p_lo > PRUNE_TOL {
            lp.add_sparse_row(
                &[(vars.p(t), 1.0), (vars.loss(t), 1.0)],
                RowSense::Ge,
                p_lo,
            );
            tags.push(("charging power band", t));
        }

        // Cumulative energy band on (P + P^loss) eta dt.
        let (e_lo, e_hi) = th.e_band[t];
        let mut cum: Vec<(usize, f64)> = Vec::with_capacity(2 * (t + 1));
        for tau in 0..=t {
            cum.push((vars.p(tau), eta_dt));
            cum.push((vars.loss(tau), eta_dt));
        }
        lp.add_sparse_row(&cum, RowSense::Le, e_hi);
        tags.push(("charging energy band", t));
        if e_lo > PRUNE_TOL {
            lp.add_sparse_row(&cum, RowSense::Ge, e_lo);
            tags.push(("charging energy band", t));
        }

        // Plug-in energy band on cumulative interchange shedding.
        if inputs.interchange_enabled {
            let pitc_cum: Vec<(usize, f64)> =
                (0..=t).map(|tau| (vars.pitc(tau), eta_dt)).collect();
            lp.add_sparse_row(&pitc_cum, RowSense::Le, th.pitc_cum_cap[t]);
            tags.push(("plug-in energy band", t));
            if th.pitc_cum_floor[t] > PRUNE_TOL {
                lp.add_sparse_row(&pitc_cum, RowSense::Ge, th.pitc_cum_floor[t]);
                tags.push(("plug-in energy band", t));
            }
        }

        // Remaining plug-in power caps charging; confident plug-in power
        // sizes the charger fleet.
        lp.add_sparse_row(
            &[(vars.p(t), 1.0), (vars.pitc(t), 1.0)],
            RowSense::Le,
            th.pp_hi_upper[t],
        );
        tags.push(("plug-in power band", t));
        if th.pp_hi_lower[t] > PRUNE_TOL {
            lp.add_sparse_row(
                &[
                    (vars.x(), inputs.charger.p_rated_kw),
                    (vars.pitc(t), 1.0),
                ],
                RowSense::Ge,
                th.pp_hi_lower[t],
            );
            tags.push(("charger count", t));
        }

        // Peak tracking for the demand charge.
        lp.add_sparse_row(
            &[(vars.p(t), 1.0), (vars.peak(), -1.0)],
            RowSense::Le,
            -th.base_low[t],
        );
        tags.push(("grid peak", t));
    }

    Ok(PlanningProblem {
        lp,
        vars,
        thresholds: th,
        row_tags: tags,
    })
}

/// Annualized cost breakdown of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub capital_usd: f64,
    pub demand_charge_usd: f64,
    pub energy_usd: f64,
    pub shedding_usd: f64,
    pub itc_plan_usd: f64,
}

impl CostBreakdown {
    pub fn total_usd(&self) -> f64 {
        self.capital_usd
            + self.demand_charge_usd
            + self.energy_usd
            + self.shedding_usd
            + self.itc_plan_usd
    }
}

/// Solved sizing plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningSolution {
    pub x_chargers: u32,
    pub x_relaxed: f64,
    pub epsilon: f64,
    /// Planned charging profile (kW per step).
    pub p_kw: Vec<f64>,
    pub p_loss_kw: Vec<f64>,
    pub p_pitc_kw: Vec<f64>,
    /// Planned plug-in consumption: confident plug-in power minus shed.
    pub p_plugin_kw: Vec<f64>,
    /// Planned net grid draw: charging plus confident base load.
    pub p_grid_kw: Vec<f64>,
    pub p_max_grid_kw: f64,
    pub costs: CostBreakdown,
    pub total_annual_usd: f64,
}

/// Builds, solves, rounds the charger count, and re-solves with it fixed.
pub fn solve_plan(inputs: &PlanInputs) -> Result<PlanningSolution> {
    solve_plan_with(&SimplexSolver::default(), inputs)
}

/// [`solve_plan`] through a caller-supplied solver.
pub fn solve_plan_with(solver: &dyn LpSolver, inputs: &PlanInputs) -> Result<PlanningSolution> {
    let mut problem = build_planning_lp(inputs)?;
    let relaxed = solve_or_diagnose(solver, &problem, "relaxed")?;
    let x_relaxed = relaxed.x[problem.vars.x()].max(0.0);
    let x_chargers = (x_relaxed - ROUND_EPS).ceil().max(0.0) as u32;

    problem
        .lp
        .set_bounds(problem.vars.x(), x_chargers as f64, x_chargers as f64);
    let fixed = solve_or_diagnose(solver, &problem, "fixed charger count")?;

    let grid = &inputs.bounds.grid;
    let n = grid.n_steps();
    let dt = grid.dt_h();
    let vars = problem.vars;
    let th = &problem.thresholds;

    let p_kw: Vec<f64> = (0..n).map(|t| fixed.x[vars.p(t)]).collect();
    let p_loss_kw: Vec<f64> = (0..n).map(|t| fixed.x[vars.loss(t)]).collect();
    let p_pitc_kw: Vec<f64> = (0..n).map(|t| fixed.x[vars.pitc(t)]).collect();
    let p_plugin_kw: Vec<f64> = (0..n)
        .map(|t| (th.pp_hi_lower[t] - p_pitc_kw[t]).max(0.0))
        .collect();
    let p_grid_kw: Vec<f64> = (0..n).map(|t| p_kw[t] + th.base_low[t]).collect();
    let p_max_grid_kw = fixed.x[vars.peak()];

    let costs = CostBreakdown {
        capital_usd: x_chargers as f64 * inputs.costs.zeta_per_yr * inputs.costs.c_charger_usd,
        demand_charge_usd: 12.0 * inputs.costs.c_demand_usd_per_kw_month * p_max_grid_kw,
        energy_usd: 365.0
            * dt
            * p_kw
                .iter()
                .zip(&inputs.costs.c_energy_usd_per_kwh)
                .map(|(p, c)| p * c)
                .sum::<f64>(),
        shedding_usd: 365.0
            * dt
            * inputs.costs.c_loss_usd_per_kwh
            * p_loss_kw.iter().sum::<f64>(),
        itc_plan_usd: 365.0
            * dt
            * inputs.costs.c_itc_plan_usd_per_kwh
            * p_pitc_kw.iter().sum::<f64>(),
    };
    let total_annual_usd = costs.total_usd();

    Ok(PlanningSolution {
        x_chargers,
        x_relaxed,
        epsilon: inputs.epsilon.epsilon(),
        p_kw,
        p_loss_kw,
        p_pitc_kw,
        p_plugin_kw,
        p_grid_kw,
        p_max_grid_kw,
        costs,
        total_annual_usd,
    })
}

fn solve_or_diagnose(
    solver: &dyn LpSolver,
    problem: &PlanningProblem,
    stage: &str,
) -> Result<crate::lp::LpSolution> {
    let sol = solver.solve(&problem.lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => {
            let mut families: Vec<String> = sol
                .infeasible_rows
                .iter()
                .filter_map(|&r| problem.row_tags.get(r))
                .map(|(family, t)| format!("{family} at step {t}"))
                .collect();
            families.dedup();
            let diagnosis = if families.is_empty() {
                "unknown".to_string()
            } else {
                families.join("; ")
            };
            Err(Error::PlanInfeasible {
                status: format!("infeasible ({stage})"),
                diagnosis,
            })
        }
        LpStatus::Unbounded => Err(Error::PlanInfeasible {
            status: format!("unbounded ({stage})"),
            diagnosis: "objective not bounded below".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{estimate_bound_distributions, Scenario};
    use crate::session::PevSession;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn crf_hand_values() {
        let crf = capital_recovery_factor(0.06, 15).unwrap();
        assert!((crf - 0.102963).abs() < 1e-6);
        assert!((crf * 4000.0 - 411.85).abs() < 0.01);
        assert!((capital_recovery_factor(0.06, 1).unwrap() - 1.06).abs() < 1e-12);
        assert!(capital_recovery_factor(0.0, 10).is_err());
        assert!(capital_recovery_factor(0.06, 0).is_err());
    }

    #[test]
    fn crf_annuity_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let r = rng.gen_range(0.005..0.25);
            let n = rng.gen_range(1..=40u32);
            let crf = capital_recovery_factor(r, n).unwrap();
            let pv: f64 = (1..=n).map(|k| crf / (1.0 + r).powi(k as i32)).sum();
            assert!((pv - 1.0).abs() < 1e-9, "annuity identity broke at r={r}, N={n}");
        }
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(6.0, 1.0, 12).unwrap()
    }

    fn flat_costs(grid: &TimeGrid) -> CostParameters {
        let mut c = CasePreset::Case1.cost_parameters(grid);
        c.c_energy_usd_per_kwh = vec![0.2; grid.n_steps()];
        c
    }

    fn empty_scenarios(grid: &TimeGrid) -> Vec<Scenario> {
        (0..2)
            .map(|seed| Scenario {
                seed,
                sessions: vec![],
                base_load_kw: vec![0.0; grid.n_steps()],
            })
            .collect()
    }

    fn one_pev_scenarios(grid: &TimeGrid, n_copies: usize) -> Vec<Scenario> {
        // Deterministic: identical scenarios so every std is zero. One PEV
        // needing the entire 8..12 window at rated power.
        (0..n_copies as u64)
            .map(|seed| Scenario {
                seed,
                sessions: vec![
                    PevSession::new(0, 8.0, 12.0, 0.2, 0.86, 0.95, 40.0, 0.0).unwrap()
                ],
                base_load_kw: vec![0.0; grid.n_steps()],
            })
            .collect()
    }

    fn inputs<'a>(
        bounds: &'a BoundDistributions,
        costs: &'a CostParameters,
        interchange: bool,
    ) -> PlanInputs<'a> {
        PlanInputs {
            bounds,
            charger: ChargerSpec::new(6.6, 1.0).unwrap(),
            costs,
            limits: GridLimits::default(),
            epsilon: ReliabilityLevel::new(0.2).unwrap(),
            interchange_enabled: interchange,
        }
    }

    #[test]
    fn zero_demand_zero_plan() {
        let g = grid();
        let charger = ChargerSpec::new(6.6, 1.0).unwrap();
        let bounds = estimate_bound_distributions(
            &empty_scenarios(&g),
            &charger,
            &g,
            ParamForm::Gaussian,
        )
        .unwrap();
        let costs = flat_costs(&g);
        let plan = solve_plan(&inputs(&bounds, &costs, true)).unwrap();
        assert_eq!(plan.x_chargers, 0);
        assert!(plan.total_annual_usd.abs() < 1e-9);
        assert!(plan.p_kw.iter().all(|&p| p.abs() < 1e-9));
    }

    #[test]
    fn single_pev_full_window_needs_one_charger() {
        let g = grid();
        let charger = ChargerSpec::new(6.6, 1.0).unwrap();
        let bounds =
            estimate_bound_distributions(&one_pev_scenarios(&g, 2), &charger, &g, ParamForm::Gaussian)
                .unwrap();
        let costs = flat_costs(&g);
        let plan = solve_plan(&inputs(&bounds, &costs, false)).unwrap();
        assert_eq!(plan.x_chargers, 1);
        // Steps 2..6 cover 8:00-12:00 on this grid; full rated charging.
        for t in 2..6 {
            assert!((plan.p_kw[t] - 6.6).abs() < 1e-6, "step {t}: {}", plan.p_kw[t]);
        }
        assert!(plan.p_loss_kw.iter().sum::<f64>() < 1e-9);
        // Capital is definitional.
        assert!(
            (plan.costs.capital_usd - plan.x_chargers as f64 * costs.zeta_per_yr * 4000.0).abs()
                < 1e-9
        );
        // Breakdown adds up and the peak is tight.
        assert!(
            (plan.total_annual_usd - plan.costs.total_usd()).abs()
                <= 1e-6 * plan.total_annual_usd.abs().max(1.0)
        );
        let max_grid = plan
            .p_grid_kw
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        assert!((plan.p_max_grid_kw - max_grid).abs() < 1e-6);
    }

    #[test]
    fn interchange_price_monotonicity() {
        let g = grid();
        let charger = ChargerSpec::new(6.6, 1.0).unwrap();
        // Two PEVs sharing the day with loose windows leaves plug-in slack.
        let scenarios: Vec<Scenario> = (0..2u64)
            .map(|seed| Scenario {
                seed,
                sessions: vec![
                    PevSession::new(0, 7.0, 15.0, 0.4, 0.7, 0.95, 24.0, 0.0).unwrap(),
                    PevSession::new(1, 8.0, 16.0, 0.4, 0.7, 0.95, 24.0, 0.0).unwrap(),
                ],
                base_load_kw: vec![0.0; g.n_steps()],
            })
            .collect();
        let bounds =
            estimate_bound_distributions(&scenarios, &charger, &g, ParamForm::Gaussian).unwrap();

        let mut cheap = flat_costs(&g);
        cheap.c_itc_plan_usd_per_kwh = 0.0;
        let mut dear = flat_costs(&g);
        dear.c_itc_plan_usd_per_kwh = 100.0;

        let plan_cheap = solve_plan(&inputs(&bounds, &cheap, true)).unwrap();
        let plan_dear = solve_plan(&inputs(&bounds, &dear, true)).unwrap();
        assert!(plan_cheap.x_relaxed <= plan_dear.x_relaxed + 1e-9);
        let shed = |p: &PlanningSolution| p.p_pitc_kw.iter().sum::<f64>();
        assert!(shed(&plan_cheap) >= shed(&plan_dear) - 1e-9);
    }

    #[test]
    fn epsilon_monotonicity() {
        let g = grid();
        let charger = ChargerSpec::new(6.6, 1.0).unwrap();
        // Noisy scenarios: one vs three PEVs.
        let mk = |seed, count: usize| Scenario {
            seed,
            sessions: (0..count)
                .map(|i| PevSession::new(i as u32, 8.0, 14.0, 0.4, 0.8, 0.95, 24.0, 0.0).unwrap())
                .collect(),
            base_load_kw: vec![0.0; g.n_steps()],
        };
        let bounds = estimate_bound_distributions(
            &[mk(0, 1), mk(1, 3), mk(2, 2)],
            &charger,
            &g,
            ParamForm::Gaussian,
        )
        .unwrap();
        let costs = flat_costs(&g);
        let mut prev_x = f64::INFINITY;
        let mut prev_cost = f64::INFINITY;
        for eps in [0.05, 0.2, 0.4] {
            let mut inp = inputs(&bounds, &costs, false);
            inp.epsilon = ReliabilityLevel::new(eps).unwrap();
            let plan = solve_plan(&inp).unwrap();
            assert!(plan.x_relaxed <= prev_x + 1e-9, "x not monotone in eps");
            assert!(
                plan.total_annual_usd <= prev_cost + 1e-6,
                "cost not monotone in eps"
            );
            prev_x = plan.x_relaxed;
            prev_cost = plan.total_annual_usd;
        }
    }

    #[test]
    fn no_interchange_covers_confident_plugin_peak() {
        let g = grid();
        let charger = ChargerSpec::new(6.6, 1.0).unwrap();
        let bounds =
            estimate_bound_distributions(&one_pev_scenarios(&g, 3), &charger, &g, ParamForm::Gaussian)
                .unwrap();
        let costs = flat_costs(&g);
        let inp = inputs(&bounds, &costs, false);
        let plan = solve_plan(&inp).unwrap();
        let th = reformulate(&inp).unwrap();
        let peak = th
            .pp_hi_lower
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        assert!(charger.p_rated_kw * plan.x_chargers as f64 >= peak - 1e-9);
        // With shedding forced off, planned plug-in consumption equals the
        // confident aggregate plug-in power.
        for t in 0..g.n_steps() {
            assert!((plan.p_plugin_kw[t] - th.pp_hi_lower[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn crossing_bands_are_model_errors() {
        let g = grid();
        let charger = ChargerSpec::new(6.6, 1.0).unwrap();
        // Scenario A: one PEV whose need equals its cap; scenario B: empty.
        // The end-of-day energy band then crosses under Gaussian quantiles.
        let a = Scenario {
            seed: 0,
            sessions: vec![PevSession::new(0, 8.0, 12.0, 0.2, 0.86, 0.86, 40.0, 0.0).unwrap()],
            base_load_kw: vec![0.0; g.n_steps()],
        };
        let b = Scenario {
            seed: 1,
            sessions: vec![],
            base_load_kw: vec![0.0; g.n_steps()],
        };
        let bounds =
            estimate_bound_distributions(&[a, b], &charger, &g, ParamForm::Gaussian).unwrap();
        let costs = flat_costs(&g);
        let err = solve_plan(&inputs(&bounds, &costs, false)).unwrap_err();
        assert!(matches!(err, Error::ModelError { .. }), "got {err:?}");
    }

    #[test]
    fn infeasible_transformer_is_diagnosed() {
        let g = grid();
        let charger = ChargerSpec::new(6.6, 1.0).unwrap();
        let bounds =
            estimate_bound_distributions(&one_pev_scenarios(&g, 2), &charger, &g, ParamForm::Gaussian)
                .unwrap();
        let costs = flat_costs(&g);
        let mut inp = inputs(&bounds, &costs, false);
        // A transformer cap below the single PEV's required charging rate
        // (26.4 kWh over 4 h needs 6.6 kW) starves the energy band.
        inp.limits = GridLimits {
            p_tran_min_kw: 0.0,
            p_tran_max_kw: 3.0,
        };
        let err = solve_plan(&inp).unwrap_err();
        match err {
            Error::PlanInfeasible { diagnosis, .. } => {
                assert!(diagnosis.contains("energy band"), "diagnosis: {diagnosis}");
            }
            other => panic!("expected PlanInfeasible, got {other:?}"),
        }
    }

    #[test]
    fn tou_prices_follow_windows() {
        let g = TimeGrid::daily(0.5).unwrap();
        let p = tou_default_prices(&g);
        assert_eq!(p[0], 0.12); // midnight
        assert_eq!(p[(9.0 / 0.5) as usize], 0.18); // 9:00
        assert_eq!(p[(13.0 / 0.5) as usize], 0.30); // 13:00
        assert_eq!(p[(19.0 / 0.5) as usize], 0.18); // 19:00
        assert_eq!(p[(23.0 / 0.5) as usize], 0.12); // 23:00
    }
}
