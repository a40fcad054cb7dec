use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One vehicle's visit to the station: arrival/departure times, state of
/// charge at arrival, required state of charge at departure, and the delay
/// incurred if its charger is interchanged to another vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PevSession {
    pub id: u32,
    /// Arrival time (hours of day).
    pub t_arr_h: f64,
    /// Expected departure time (hours of day).
    pub t_dep_h: f64,
    /// State of charge on arrival, fraction of capacity.
    pub soc_arr: f64,
    /// Required state of charge at departure, fraction of capacity.
    pub soc_dep: f64,
    /// Maximum usable state of charge, fraction of capacity.
    pub soc_max: f64,
    /// Battery capacity in kWh.
    pub battery_kwh: f64,
    /// Time to interchange this vehicle's charger to the next one, in hours.
    pub dt_itc_h: f64,
}

impl PevSession {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        t_arr_h: f64,
        t_dep_h: f64,
        soc_arr: f64,
        soc_dep: f64,
        soc_max: f64,
        battery_kwh: f64,
        dt_itc_h: f64,
    ) -> Result<Self> {
        let s = Self {
            id,
            t_arr_h,
            t_dep_h,
            soc_arr,
            soc_dep,
            soc_max,
            battery_kwh,
            dt_itc_h,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Error::InvalidInput {
            what: "PevSession",
            why,
        };
        if !(self.t_arr_h.is_finite() && self.t_dep_h.is_finite() && self.t_arr_h < self.t_dep_h) {
            return Err(bad(format!(
                "pev {}: arrival {} must precede departure {}",
                self.id, self.t_arr_h, self.t_dep_h
            )));
        }
        if !(0.0 <= self.soc_arr
            && self.soc_arr <= self.soc_dep
            && self.soc_dep <= self.soc_max
            && self.soc_max <= 1.0)
        {
            return Err(bad(format!(
                "pev {}: need 0 <= soc_arr <= soc_dep <= soc_max <= 1, got {} / {} / {}",
                self.id, self.soc_arr, self.soc_dep, self.soc_max
            )));
        }
        if !(self.battery_kwh.is_finite() && self.battery_kwh > 0.0) {
            return Err(bad(format!(
                "pev {}: battery capacity must be positive, got {}",
                self.id, self.battery_kwh
            )));
        }
        if !(self.dt_itc_h.is_finite() && self.dt_itc_h >= 0.0) {
            return Err(bad(format!(
                "pev {}: interchange delay must be >= 0, got {}",
                self.id, self.dt_itc_h
            )));
        }
        Ok(())
    }

    /// Battery-side energy that must be delivered by departure, in kWh.
    pub fn energy_need_kwh(&self) -> f64 {
        (self.soc_dep - self.soc_arr) * self.battery_kwh
    }

    /// Battery-side headroom up to the maximum state of charge, in kWh.
    pub fn headroom_kwh(&self) -> f64 {
        (self.soc_max - self.soc_arr) * self.battery_kwh
    }

    /// Minimum required plug-in energy: the energy need plus the extra
    /// plug-in energy occupied during the interchange delay.
    pub fn plugin_energy_need_kwh(&self, charger: &ChargerSpec) -> f64 {
        self.energy_need_kwh() + charger.p_rated_kw * charger.eta * self.dt_itc_h
    }
}

/// Charger hardware: rated power and charging efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargerSpec {
    pub p_rated_kw: f64,
    pub eta: f64,
}

impl ChargerSpec {
    pub fn new(p_rated_kw: f64, eta: f64) -> Result<Self> {
        if !(p_rated_kw.is_finite() && p_rated_kw > 0.0) {
            return Err(Error::InvalidInput {
                what: "ChargerSpec",
                why: format!("rated power must be positive, got {p_rated_kw}"),
            });
        }
        if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidInput {
                what: "ChargerSpec",
                why: format!("efficiency must lie in (0, 1], got {eta}"),
            });
        }
        Ok(Self { p_rated_kw, eta })
    }

    /// Battery-side energy delivered per hour of rated charging.
    pub fn battery_kw(&self) -> f64 {
        self.p_rated_kw * self.eta
    }
}

impl Default for ChargerSpec {
    /// 6.6 kW level-2 charger at 90% efficiency.
    fn default() -> Self {
        Self {
            p_rated_kw: 6.6,
            eta: 0.90,
        }
    }
}
