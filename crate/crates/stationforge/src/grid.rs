use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when snapping continuous times onto grid stamps, so that
/// times sitting exactly on a stamp do not wobble across it.
const SNAP_EPS: f64 = 1e-9;

/// A uniform intra-day time grid.
///
/// Step `k` covers the interval `[t0 + k*dt, t0 + (k+1)*dt)` in hours of day.
/// Stamp `j` (with `0 <= j <= n_steps`) is the instant `t0 + j*dt`; per-step
/// cumulative quantities are evaluated at the stamp closing each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0_h: f64,
    dt_h: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0_h: f64, dt_h: f64, n_steps: usize) -> Result<Self> {
        if !dt_h.is_finite() || dt_h <= 0.0 {
            return Err(Error::InvalidInput {
                what: "TimeGrid",
                why: format!("dt must be positive, got {dt_h}"),
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput {
                what: "TimeGrid",
                why: "n_steps must be >= 1".into(),
            });
        }
        if !t0_h.is_finite() || t0_h < 0.0 {
            return Err(Error::InvalidInput {
                what: "TimeGrid",
                why: format!("t0 must be a non-negative hour of day, got {t0_h}"),
            });
        }
        if n_steps as f64 * dt_h > 24.0 + SNAP_EPS {
            return Err(Error::InvalidInput {
                what: "TimeGrid",
                why: format!("daily grid spans {} h > 24 h", n_steps as f64 * dt_h),
            });
        }
        Ok(Self { t0_h, dt_h, n_steps })
    }

    /// A full-day grid starting at midnight.
    pub fn daily(dt_h: f64) -> Result<Self> {
        let n = (24.0 / dt_h).round() as usize;
        Self::new(0.0, dt_h, n)
    }

    pub fn t0_h(&self) -> f64 {
        self.t0_h
    }

    pub fn dt_h(&self) -> f64 {
        self.dt_h
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Instant of stamp `j` in hours of day.
    pub fn stamp_h(&self, j: usize) -> f64 {
        self.t0_h + j as f64 * self.dt_h
    }

    pub fn step_start_h(&self, k: usize) -> f64 {
        self.stamp_h(k)
    }

    pub fn step_end_h(&self, k: usize) -> f64 {
        self.stamp_h(k + 1)
    }

    pub fn end_h(&self) -> f64 {
        self.stamp_h(self.n_steps)
    }

    /// Snap a time up to the next stamp, clamped into `[0, n_steps]`.
    pub fn snap_up(&self, t_h: f64) -> usize {
        let j = ((t_h - self.t0_h) / self.dt_h - SNAP_EPS).ceil();
        j.clamp(0.0, self.n_steps as f64) as usize
    }

    /// Snap a time down to the previous stamp, clamped into `[0, n_steps]`.
    pub fn snap_down(&self, t_h: f64) -> usize {
        let j = ((t_h - self.t0_h) / self.dt_h + SNAP_EPS).floor();
        j.clamp(0.0, self.n_steps as f64) as usize
    }

    pub fn same_shape(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && (self.t0_h - other.t0_h).abs() < SNAP_EPS
            && (self.dt_h - other.dt_h).abs() < SNAP_EPS
    }
}
