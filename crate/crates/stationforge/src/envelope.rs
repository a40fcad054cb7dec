//! Per-vehicle and aggregate demand envelopes.
//!
//! Two kinds of envelope describe a PEV fleet. The *charging* envelope bounds
//! what the fleet actually consumes: the upper traces charge-immediately
//! behavior, the lower charge-as-late-as-possible. The *plug-in* envelope
//! bounds the power and energy the fleet *occupies* while plugged in, which
//! is what sizes the charger fleet once interchange is on the table.
//!
//! Energy bounds are battery-side kWh, cumulative from the grid start and
//! evaluated at the stamp closing each step. Power bounds are grid-side kW
//! per step.

use log::warn;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::session::{ChargerSpec, PevSession};

const TOL: f64 = 1e-9;

/// Time-indexed lower/upper power bounds and cumulative-energy bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandEnvelope {
    grid: TimeGrid,
    p_lo: Vec<f64>,
    p_hi: Vec<f64>,
    e_lo: Vec<f64>,
    e_hi: Vec<f64>,
}

impl DemandEnvelope {
    /// Builds an envelope and checks its invariants; `eta` is the charging
    /// efficiency coupling power to energy increments.
    pub fn new(
        grid: TimeGrid,
        p_lo: Vec<f64>,
        p_hi: Vec<f64>,
        e_lo: Vec<f64>,
        e_hi: Vec<f64>,
        eta: f64,
    ) -> Result<Self> {
        let env = Self {
            grid,
            p_lo,
            p_hi,
            e_lo,
            e_hi,
        };
        env.validate(eta)?;
        Ok(env)
    }

    pub fn zero(grid: TimeGrid) -> Self {
        let n = grid.n_steps();
        Self {
            grid,
            p_lo: vec![0.0; n],
            p_hi: vec![0.0; n],
            e_lo: vec![0.0; n],
            e_hi: vec![0.0; n],
        }
    }

    pub fn validate(&self, eta: f64) -> Result<()> {
        let n = self.grid.n_steps();
        let bad = |why: String| Error::InvalidInput {
            what: "DemandEnvelope",
            why,
        };
        for (name, v) in [
            ("p_lo", &self.p_lo),
            ("p_hi", &self.p_hi),
            ("e_lo", &self.e_lo),
            ("e_hi", &self.e_hi),
        ] {
            if v.len() != n {
                return Err(bad(format!("{name} has {} entries, grid has {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad(format!("{name} contains a non-finite entry")));
            }
        }
        let dt = self.grid.dt_h();
        let mut prev_lo = 0.0;
        let mut prev_hi = 0.0;
        for k in 0..n {
            if self.p_lo[k] > self.p_hi[k] + TOL {
                return Err(bad(format!("p_lo > p_hi at step {k}")));
            }
            if self.e_lo[k] > self.e_hi[k] + TOL {
                return Err(bad(format!("e_lo > e_hi at step {k}")));
            }
            if self.e_lo[k] + TOL < prev_lo || self.e_hi[k] + TOL < prev_hi {
                return Err(bad(format!("energy bound decreases at step {k}")));
            }
            if self.e_hi[k] - prev_hi > self.p_hi[k] * eta * dt + TOL {
                return Err(bad(format!(
                    "e_hi increment at step {k} exceeds p_hi * eta * dt"
                )));
            }
            prev_lo = self.e_lo[k];
            prev_hi = self.e_hi[k];
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn p_lo(&self) -> &[f64] {
        &self.p_lo
    }

    pub fn p_hi(&self) -> &[f64] {
        &self.p_hi
    }

    pub fn e_lo(&self) -> &[f64] {
        &self.e_lo
    }

    pub fn e_hi(&self) -> &[f64] {
        &self.e_hi
    }

    pub fn e_lo_final(&self) -> f64 {
        *self.e_lo.last().unwrap_or(&0.0)
    }

    pub fn e_hi_final(&self) -> f64 {
        *self.e_hi.last().unwrap_or(&0.0)
    }
}

/// Plug-in window of a session snapped onto grid stamps: arrival rounds up,
/// departure rounds down, both clipped to the grid. Returns stamp indices
/// `(a, d)` with `a <= d`; the vehicle occupies steps `a..d`.
pub fn presence_window(s: &PevSession, g: &TimeGrid) -> (usize, usize) {
    if s.t_arr_h < g.t0_h() - TOL || s.t_dep_h > g.end_h() + TOL {
        warn!(
            "pev {}: session [{:.2}, {:.2}] h clipped to grid [{:.2}, {:.2}] h",
            s.id,
            s.t_arr_h,
            s.t_dep_h,
            g.t0_h(),
            g.end_h()
        );
    }
    let a = g.snap_up(s.t_arr_h);
    let d = g.snap_down(s.t_dep_h).max(a);
    (a, d)
}

/// Battery-side energy deliverable at rated power over the snapped window.
pub fn deliverable_kwh(s: &PevSession, c: &ChargerSpec, g: &TimeGrid) -> f64 {
    let (a, d) = presence_window(s, g);
    c.battery_kw() * g.dt_h() * (d - a) as f64
}

/// Battery-side cap of the charging-energy upper trace: headroom to
/// `soc_max` or full-window delivery, whichever is smaller.
pub fn e_max_kwh(s: &PevSession, c: &ChargerSpec, g: &TimeGrid) -> f64 {
    s.headroom_kwh().min(deliverable_kwh(s, c, g))
}

/// Maximum plug-in energy: rated delivery over the whole snapped window.
pub fn e_pmax_kwh(s: &PevSession, c: &ChargerSpec, g: &TimeGrid) -> f64 {
    deliverable_kwh(s, c, g)
}

fn three_branch_traces(
    g: &TimeGrid,
    a: usize,
    d: usize,
    rate_kwh_per_step: f64,
    e_top: f64,
    e_floor_target: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = g.n_steps();
    let mut hi = vec![0.0; n];
    let mut lo = vec![0.0; n];
    for k in 0..n {
        let j = k + 1; // stamp closing step k
        if j <= a {
            continue;
        }
        if j <= d {
            hi[k] = (rate_kwh_per_step * (j - a) as f64).min(e_top);
            lo[k] = (e_floor_target - rate_kwh_per_step * (d - j) as f64).max(0.0);
        } else {
            hi[k] = e_top;
            lo[k] = e_floor_target;
        }
    }
    (hi, lo)
}

/// Envelope of actual charging demand: immediate charging above, latest
/// feasible charging below.
pub fn charging_envelope(
    s: &PevSession,
    c: &ChargerSpec,
    g: &TimeGrid,
) -> Result<DemandEnvelope> {
    let (a, d) = presence_window(s, g);
    let need = s.energy_need_kwh();
    let deliverable = c.battery_kw() * g.dt_h() * (d - a) as f64;
    if need > deliverable + TOL {
        return Err(Error::InfeasibleSession {
            pev_id: s.id,
            need_kwh: need,
            deliverable_kwh: deliverable,
        });
    }
    let e_top = s.headroom_kwh().min(deliverable);
    let rate = c.battery_kw() * g.dt_h();
    let (e_hi, e_lo) = three_branch_traces(g, a, d, rate, e_top, need);
    let mut p_hi = vec![0.0; g.n_steps()];
    for p in p_hi.iter_mut().take(d).skip(a) {
        *p = c.p_rated_kw;
    }
    DemandEnvelope::new(g.clone(), vec![0.0; g.n_steps()], p_hi, e_lo, e_hi, c.eta)
}

/// Envelope of plug-in demand: the power and energy the vehicle occupies
/// while connected, whether or not it is drawing.
pub fn plugin_envelope(s: &PevSession, c: &ChargerSpec, g: &TimeGrid) -> Result<DemandEnvelope> {
    let (a, d) = presence_window(s, g);
    let e_pmax = c.battery_kw() * g.dt_h() * (d - a) as f64;
    let e_pneed = s.plugin_energy_need_kwh(c);
    if e_pneed > e_pmax + TOL {
        return Err(Error::InfeasibleSession {
            pev_id: s.id,
            need_kwh: e_pneed,
            deliverable_kwh: e_pmax,
        });
    }
    let rate = c.battery_kw() * g.dt_h();
    let (e_hi, e_lo) = three_branch_traces(g, a, d, rate, e_pmax, e_pneed);
    let mut p_hi = vec![0.0; g.n_steps()];
    for p in p_hi.iter_mut().take(d).skip(a) {
        *p = c.p_rated_kw;
    }
    DemandEnvelope::new(g.clone(), vec![0.0; g.n_steps()], p_hi, e_lo, e_hi, c.eta)
}

/// Elementwise sum of envelopes sharing one grid. An empty list yields the
/// all-zero envelope on `g`.
pub fn aggregate(g: &TimeGrid, envelopes: &[DemandEnvelope]) -> Result<DemandEnvelope> {
    let n = g.n_steps();
    let mut out = DemandEnvelope::zero(g.clone());
    for env in envelopes {
        if !env.grid.same_shape(g) {
            return Err(Error::GridMismatch {
                left: n,
                right: env.grid.n_steps(),
            });
        }
        for k in 0..n {
            out.p_lo[k] += env.p_lo[k];
            out.p_hi[k] += env.p_hi[k];
            out.e_lo[k] += env.e_lo[k];
            out.e_hi[k] += env.e_hi[k];
        }
    }
    Ok(out)
}
