//! Monte-Carlo generation of daily PEV populations and base-load profiles.
//!
//! Driver behavior is described by truncated normals for arrival/departure
//! times and arrival/required SoC. The shipped defaults are placeholder
//! values chosen to exercise a 50 PEV/day destination station; they are not
//! survey-fitted parameters, so downstream studies should treat absolute
//! results as illustrative and rely on cross-case comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chance::{normal_cdf, normal_pdf, ParamForm, StochasticParam};
use crate::envelope::{self, DemandEnvelope};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::par;
use crate::session::{ChargerSpec, PevSession};

/// Rejection-sampling cap, per draw and per vehicle.
const MAX_TRIES: u32 = 1000;

/// A normal distribution truncated to `[lo, hi]`, sampled by rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncNormal {
    pub fn new(mean: f64, std: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || !(std >= 0.0) || !mean.is_finite() {
            return Err(Error::InvalidInput {
                what: "TruncNormal",
                why: format!("need finite ordered bounds and std >= 0: N({mean},{std}) on [{lo},{hi}]"),
            });
        }
        Ok(Self { mean, std, lo, hi })
    }

    /// Point mass at `v`.
    pub fn fixed(v: f64) -> Self {
        Self {
            mean: v,
            std: 0.0,
            lo: v,
            hi: v,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, field: &'static str) -> Result<f64> {
        let normal = Normal::new(self.mean, self.std).expect("std checked >= 0");
        for _ in 0..MAX_TRIES {
            let v = normal.sample(rng);
            if v >= self.lo && v <= self.hi {
                return Ok(v);
            }
        }
        Err(Error::DegenerateModel {
            field,
            tries: MAX_TRIES,
        })
    }

    /// Closed-form mean of the truncated distribution.
    pub fn mean_analytic(&self) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        let alpha = (self.lo - self.mean) / self.std;
        let beta = (self.hi - self.mean) / self.std;
        let z = normal_cdf(beta) - normal_cdf(alpha);
        self.mean + self.std * (normal_pdf(alpha) - normal_pdf(beta)) / z
    }
}

/// Station background load, before any PEV charging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseLoad {
    FlatKw(f64),
    ProfileKw(Vec<f64>),
}

impl BaseLoad {
    pub fn resolve(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            BaseLoad::FlatKw(v) => Ok(vec![*v; grid.n_steps()]),
            BaseLoad::ProfileKw(p) => {
                if p.len() != grid.n_steps() {
                    return Err(Error::InvalidInput {
                        what: "BaseLoad",
                        why: format!(
                            "profile has {} entries, grid has {}",
                            p.len(),
                            grid.n_steps()
                        ),
                    });
                }
                Ok(p.clone())
            }
        }
    }
}

/// Statistical description of one day of driver behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    pub n_pevs_per_day: usize,
    pub dist_t_arr: TruncNormal,
    pub dist_t_dep: TruncNormal,
    pub dist_soc_arr: TruncNormal,
    pub dist_soc_dep: TruncNormal,
    pub soc_max: f64,
    pub battery_kwh: f64,
    pub dt_itc_h: f64,
    /// Informational only; lets studies convert SoC to driving range.
    pub consumption_kwh_per_km: f64,
    pub base_load: BaseLoad,
}

impl Default for BehaviorModel {
    /// 50 commuter-style PEVs/day. Placeholder distributions; the required
    /// departure SoC is drawn below `soc_max` so that required and maximum
    /// charging energy stay distinguishable in the aggregate.
    fn default() -> Self {
        Self {
            n_pevs_per_day: 50,
            dist_t_arr: TruncNormal::new(9.0, 1.5, 5.0, 13.0).unwrap(),
            dist_t_dep: TruncNormal::new(17.5, 1.5, 13.0, 23.0).unwrap(),
            dist_soc_arr: TruncNormal::new(0.45, 0.15, 0.05, 0.8).unwrap(),
            dist_soc_dep: TruncNormal::new(0.85, 0.06, 0.55, 0.95).unwrap(),
            soc_max: 0.95,
            battery_kwh: 24.0,
            dt_itc_h: 0.25,
            consumption_kwh_per_km: 0.14,
            base_load: BaseLoad::FlatKw(0.0),
        }
    }
}

impl BehaviorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.soc_max > 0.0 && self.soc_max <= 1.0) {
            return Err(Error::InvalidInput {
                what: "BehaviorModel",
                why: format!("soc_max must lie in (0, 1], got {}", self.soc_max),
            });
        }
        if self.battery_kwh <= 0.0 || self.dt_itc_h < 0.0 {
            return Err(Error::InvalidInput {
                what: "BehaviorModel",
                why: "battery_kwh must be positive and dt_itc_h >= 0".into(),
            });
        }
        Ok(())
    }
}

/// One synthetic day: the sampled sessions plus the base-load profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub sessions: Vec<PevSession>,
    pub base_load_kw: Vec<f64>,
}

/// Draws one scenario. Deterministic in `(model, grid, seed)`.
pub fn sample_scenario(model: &BehaviorModel, grid: &TimeGrid, seed: u64) -> Result<Scenario> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions = Vec::with_capacity(model.n_pevs_per_day);
    for id in 0..model.n_pevs_per_day {
        sessions.push(sample_session(model, id as u32, &mut rng)?);
    }
    Ok(Scenario {
        seed,
        sessions,
        base_load_kw: model.base_load.resolve(grid)?,
    })
}

fn sample_session<R: Rng>(model: &BehaviorModel, id: u32, rng: &mut R) -> Result<PevSession> {
    for _ in 0..MAX_TRIES {
        let t_arr = model.dist_t_arr.sample(rng, "t_arr")?;
        let t_dep = model.dist_t_dep.sample(rng, "t_dep")?;
        let soc_arr = model.dist_soc_arr.sample(rng, "soc_arr")?;
        let soc_dep = model.dist_soc_dep.sample(rng, "soc_dep")?;
        if t_arr < t_dep && soc_arr <= soc_dep && soc_dep <= model.soc_max {
            return PevSession::new(
                id,
                t_arr,
                t_dep,
                soc_arr,
                soc_dep,
                model.soc_max,
                model.battery_kwh,
                model.dt_itc_h,
            );
        }
    }
    Err(Error::DegenerateModel {
        field: "session",
        tries: MAX_TRIES,
    })
}

/// Draws `n` scenarios with per-scenario seeds derived from `base_seed`.
/// Scenarios are generated in parallel; results are identical to sequential
/// generation.
pub fn sample_scenarios(
    model: &BehaviorModel,
    grid: &TimeGrid,
    base_seed: u64,
    n: usize,
) -> Result<Vec<Scenario>> {
    let seeds = derive_seeds(base_seed, n);
    par::map_indexed(n, |i| sample_scenario(model, grid, seeds[i]))
        .into_iter()
        .collect()
}

/// Sequential counterpart of [`sample_scenarios`].
pub fn sample_scenarios_seq(
    model: &BehaviorModel,
    grid: &TimeGrid,
    base_seed: u64,
    n: usize,
) -> Result<Vec<Scenario>> {
    let seeds = derive_seeds(base_seed, n);
    par::map_indexed_seq(n, |i| sample_scenario(model, grid, seeds[i]))
        .into_iter()
        .collect()
}

fn derive_seeds(base_seed: u64, n: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(base_seed);
    (0..n).map(|_| master.gen()).collect()
}

/// Shrinks a session's demands to what its snapped grid window can carry:
/// the unreachable remainder of the energy need is dropped (it will show up
/// as unmet demand in operation) and the interchange delay is capped by the
/// plug-in slack.
pub fn fit_to_grid(s: &PevSession, c: &ChargerSpec, g: &TimeGrid) -> PevSession {
    let deliverable = envelope::deliverable_kwh(s, c, g);
    let mut out = s.clone();
    let need = s.energy_need_kwh();
    if need > deliverable {
        out.soc_dep = s.soc_arr + deliverable / s.battery_kwh;
        log::warn!(
            "pev {}: need {:.2} kWh exceeds window capacity {:.2} kWh; planning for the reachable part",
            s.id,
            need,
            deliverable
        );
    }
    let slack_h = (deliverable - out.energy_need_kwh()) / c.battery_kw();
    if out.dt_itc_h > slack_h {
        out.dt_itc_h = slack_h.max(0.0);
    }
    out
}

/// Per-timestep distributions of every stochastic bound the planner needs,
/// estimated across scenarios. Samples are stored in scenario order so that
/// families can be combined sample-wise.
#[derive(Debug, Clone)]
pub struct BoundDistributions {
    pub grid: TimeGrid,
    pub n_scenarios: usize,
    /// Aggregate charging power bounds.
    pub p_lo: Vec<StochasticParam>,
    pub p_hi: Vec<StochasticParam>,
    /// Aggregate cumulative charging energy bounds (battery-side kWh).
    pub e_lo: Vec<StochasticParam>,
    pub e_hi: Vec<StochasticParam>,
    /// Aggregate plug-in power bounds.
    pub pp_lo: Vec<StochasticParam>,
    pub pp_hi: Vec<StochasticParam>,
    /// Aggregate cumulative plug-in energy bounds.
    pub ep_lo: Vec<StochasticParam>,
    pub ep_hi: Vec<StochasticParam>,
    /// Base load.
    pub p_base: Vec<StochasticParam>,
}

/// Aggregates each scenario's charging and plug-in envelopes and fits a
/// [`StochasticParam`] per bound and timestep. Returns both the empirical
/// sample sets and the fitted Gaussians; `form` picks which one thresholds
/// are later taken from.
pub fn estimate_bound_distributions(
    scenarios: &[Scenario],
    charger: &ChargerSpec,
    grid: &TimeGrid,
    form: ParamForm,
) -> Result<BoundDistributions> {
    if scenarios.len() < 2 {
        return Err(Error::InsufficientScenarios {
            got: scenarios.len(),
        });
    }
    let per_scenario: Vec<Result<(DemandEnvelope, DemandEnvelope, Vec<f64>)>> =
        par::map_indexed(scenarios.len(), |s| {
            let scn = &scenarios[s];
            let fitted: Vec<PevSession> = scn
                .sessions
                .iter()
                .map(|sess| fit_to_grid(sess, charger, grid))
                .collect();
            let charging: Vec<DemandEnvelope> = fitted
                .iter()
                .map(|sess| envelope::charging_envelope(sess, charger, grid))
                .collect::<Result<_>>()?;
            let plugin: Vec<DemandEnvelope> = fitted
                .iter()
                .map(|sess| envelope::plugin_envelope(sess, charger, grid))
                .collect::<Result<_>>()?;
            if scn.base_load_kw.len() != grid.n_steps() {
                return Err(Error::GridMismatch {
                    left: grid.n_steps(),
                    right: scn.base_load_kw.len(),
                });
            }
            Ok((
                envelope::aggregate(grid, &charging)?,
                envelope::aggregate(grid, &plugin)?,
                scn.base_load_kw.clone(),
            ))
        });
    let per_scenario: Vec<(DemandEnvelope, DemandEnvelope, Vec<f64>)> =
        per_scenario.into_iter().collect::<Result<_>>()?;

    let n = grid.n_steps();
    let fit = |extract: &dyn Fn(&(DemandEnvelope, DemandEnvelope, Vec<f64>), usize) -> f64| {
        (0..n)
            .map(|t| {
                let samples: Vec<f64> = per_scenario.iter().map(|trio| extract(trio, t)).collect();
                StochasticParam::from_samples(samples, form)
            })
            .collect::<Result<Vec<_>>>()
    };

    Ok(BoundDistributions {
        grid: grid.clone(),
        n_scenarios: scenarios.len(),
        p_lo: fit(&|(ch, _, _), t| ch.p_lo()[t])?,
        p_hi: fit(&|(ch, _, _), t| ch.p_hi()[t])?,
        e_lo: fit(&|(ch, _, _), t| ch.e_lo()[t])?,
        e_hi: fit(&|(ch, _, _), t| ch.e_hi()[t])?,
        pp_lo: fit(&|(_, pl, _), t| pl.p_lo()[t])?,
        pp_hi: fit(&|(_, pl, _), t| pl.p_hi()[t])?,
        ep_lo: fit(&|(_, pl, _), t| pl.e_lo()[t])?,
        ep_hi: fit(&|(_, pl, _), t| pl.e_hi()[t])?,
        p_base: fit(&|(_, _, base), t| base[t])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::daily(1.0).unwrap()
    }

    #[test]
    fn zero_pevs_gives_empty_sessions() {
        let mut m = BehaviorModel::default();
        m.n_pevs_per_day = 0;
        let s = sample_scenario(&m, &grid(), 7).unwrap();
        assert!(s.sessions.is_empty());
        assert_eq!(s.base_load_kw.len(), 24);
    }

    #[test]
    fn same_seed_same_scenario() {
        let m = BehaviorModel::default();
        let a = sample_scenario(&m, &grid(), 42).unwrap();
        let b = sample_scenario(&m, &grid(), 42).unwrap();
        assert_eq!(a, b);
        let c = sample_scenario(&m, &grid(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parallel_and_sequential_batches_agree() {
        let m = BehaviorModel::default();
        let par = sample_scenarios(&m, &grid(), 11, 8).unwrap();
        let seq = sample_scenarios_seq(&m, &grid(), 11, 8).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn truncated_mean_matches_analytic() {
        // Symmetric truncation keeps the mean.
        let sym = TruncNormal::new(9.0, 1.0, 5.0, 13.0).unwrap();
        assert!((sym.mean_analytic() - 9.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean = (0..10_000)
            .map(|_| sym.sample(&mut rng, "t_arr").unwrap())
            .sum::<f64>()
            / 10_000.0;
        assert!((mean - sym.mean_analytic()).abs() < 0.05);

        // One-sided truncation shifts it; check against the closed form.
        let asym = TruncNormal::new(0.0, 1.0, 0.0, 4.0).unwrap();
        let expect = asym.mean_analytic();
        assert!((expect - 0.797_83).abs() < 1e-3); // ~ sqrt(2/pi) for half-normal
        let mean = (0..20_000)
            .map(|_| asym.sample(&mut rng, "t_arr").unwrap())
            .sum::<f64>()
            / 20_000.0;
        assert!((mean - expect).abs() < 0.02);
    }

    #[test]
    fn degenerate_model_detected() {
        // Point mass outside its own bounds can never be sampled.
        let mut m = BehaviorModel::default();
        m.dist_soc_dep = TruncNormal::new(0.2, 0.001, 0.4, 0.5).unwrap();
        let err = sample_scenario(&m, &grid(), 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateModel { .. }));
    }

    #[test]
    fn sampled_sessions_respect_invariants() {
        let m = BehaviorModel::default();
        for seed in 0..20 {
            let s = sample_scenario(&m, &grid(), seed).unwrap();
            for sess in &s.sessions {
                sess.validate().unwrap();
                assert!(sess.soc_dep <= m.soc_max);
            }
        }
    }

    #[test]
    fn estimate_hand_case() {
        // Scenario A: one PEV 8..12; scenario B: two such PEVs. Aggregate
        // plug-in power at step 8 is 6.6 vs 13.2.
        let g = grid();
        let c = ChargerSpec::new(6.6, 1.0).unwrap();
        let mk = |id, n_sessions: usize| Scenario {
            seed: id,
            sessions: (0..n_sessions)
                .map(|i| {
                    PevSession::new(i as u32, 8.0, 12.0, 0.4, 0.95, 0.95, 24.0, 0.25).unwrap()
                })
                .collect(),
            base_load_kw: vec![0.0; g.n_steps()],
        };
        let bounds =
            estimate_bound_distributions(&[mk(0, 1), mk(1, 2)], &c, &g, ParamForm::Gaussian)
                .unwrap();
        let p = &bounds.pp_hi[8];
        assert!((p.mean() - 9.9).abs() < 1e-12);
        assert!((p.std() - 4.666904755831214).abs() < 1e-12);
        assert_eq!(p.samples().unwrap(), &[6.6, 13.2]);

        // Identical scenarios collapse to zero spread.
        let bounds =
            estimate_bound_distributions(&[mk(0, 2), mk(1, 2)], &c, &g, ParamForm::Gaussian)
                .unwrap();
        for t in 0..g.n_steps() {
            assert_eq!(bounds.pp_hi[t].std(), 0.0);
            assert_eq!(bounds.e_hi[t].std(), 0.0);
        }
    }

    #[test]
    fn estimator_mean_within_clt_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(5.0, 2.0).unwrap();
        let samples: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let fitted = StochasticParam::from_samples(samples, ParamForm::Gaussian).unwrap();
        let n = 10_000f64;
        assert!((fitted.mean() - 5.0).abs() <= 2.0 * 2.0 / n.sqrt());
    }

    #[test]
    fn too_few_scenarios_rejected() {
        let g = grid();
        let c = ChargerSpec::default();
        let s = Scenario {
            seed: 0,
            sessions: vec![],
            base_load_kw: vec![0.0; g.n_steps()],
        };
        assert!(matches!(
            estimate_bound_distributions(&[s], &c, &g, ParamForm::Gaussian),
            Err(Error::InsufficientScenarios { .. })
        ));
    }

    #[test]
    fn fit_to_grid_shrinks_oversized_needs() {
        let g = grid();
        let c = ChargerSpec::new(6.6, 1.0).unwrap();
        // 13.2 kWh needed, one-hour window: only 6.6 kWh reachable.
        let s = PevSession::new(0, 8.0, 9.0, 0.4, 0.95, 0.95, 24.0, 0.5).unwrap();
        let fitted = fit_to_grid(&s, &c, &g);
        assert!((fitted.energy_need_kwh() - 6.6).abs() < 1e-9);
        assert_eq!(fitted.dt_itc_h, 0.0);
        envelope::charging_envelope(&fitted, &c, &g).unwrap();
        envelope::plugin_envelope(&fitted, &c, &g).unwrap();
    }
}
