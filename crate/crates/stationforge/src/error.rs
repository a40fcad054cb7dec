use thiserror::Error;

/// Errors surfaced by the planning and simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {why}")]
    InvalidInput { what: &'static str, why: String },

    #[error(
        "session {pev_id}: needs {need_kwh:.3} kWh but at most {deliverable_kwh:.3} kWh fit in \
         its plug-in window"
    )]
    InfeasibleSession {
        pev_id: u32,
        need_kwh: f64,
        deliverable_kwh: f64,
    },

    #[error("time grids differ ({left} vs {right} steps)")]
    GridMismatch { left: usize, right: usize },

    #[error("behavior model is degenerate: no valid sample for {field} after {tries} tries")]
    DegenerateModel { field: &'static str, tries: u32 },

    #[error("need at least 2 scenarios to estimate bound distributions, got {got}")]
    InsufficientScenarios { got: usize },

    #[error("{what} out of domain: {value}")]
    DomainError { what: &'static str, value: f64 },

    #[error("simplex numerical breakdown: no pivot above {tol:e} after Bland fallback")]
    NumericalBreakdown { tol: f64 },

    #[error("problem too large for enumeration oracle ({n_vars} vars, {n_rows} rows)")]
    SizeLimit { n_vars: usize, n_rows: usize },

    #[error(
        "planning model inconsistent at step {t_index} ({family}): lower threshold \
         {lower:.6} exceeds upper threshold {upper:.6}"
    )]
    ModelError {
        t_index: usize,
        family: &'static str,
        lower: f64,
        upper: f64,
    },

    #[error("planning model {status}; tightest constraint family: {diagnosis}")]
    PlanInfeasible { status: String, diagnosis: String },
}

pub type Result<T> = std::result::Result<T, Error>;
