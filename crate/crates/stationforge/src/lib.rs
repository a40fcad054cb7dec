//! stationforge: sizing and operation analysis for destination PEV charging
//! stations that interchange chargers between vehicles.
//!
//! The pipeline:
//!
//! 1. [`scenario`] draws synthetic daily populations of charging sessions.
//! 2. [`envelope`] turns sessions into per-step power/energy envelopes for
//!    both actual charging demand and plug-in (occupancy) demand.
//! 3. [`chance`] reformulates the uncertain envelope bounds into
//!    deterministic quantile thresholds at a chosen reliability level.
//! 4. [`planner`] assembles and solves the station sizing program: charger
//!    count, grid peak, interchange intensity, and annualized cost.
//! 5. [`opsim`] replays a plan against fresh scenarios with a
//!    rolling-horizon dispatcher and reports KPIs.
//!
//! [`lp`] holds the bundled simplex everything above solves through.

pub mod chance;
pub mod envelope;
pub mod error;
pub mod grid;
pub mod lp;
pub mod opsim;
pub mod par;
pub mod planner;
pub mod scenario;
pub mod session;

pub use chance::{ParamForm, ReliabilityLevel, StochasticParam};
pub use envelope::{aggregate, charging_envelope, plugin_envelope, DemandEnvelope};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use session::{ChargerSpec, PevSession};
