//! Deterministic reformulation of one-sided chance constraints.
//!
//! A stochastic bound `b` in a linear constraint is replaced by a quantile
//! threshold so the constraint holds with probability at least `1 - eps`:
//!
//! * `Pr(b <= a'x) >= 1-eps` becomes `deterministic_lower(b, eps) <= a'x`,
//!   the `(1-eps)`-quantile of `b`; for Gaussian `b` this is
//!   `mean - inv_phi(eps) * std`.
//! * `Pr(a'x <= b) >= 1-eps` becomes `a'x <= deterministic_upper(b, eps)`,
//!   the `eps`-quantile of `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6; // 2/sqrt(pi)
const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Error function, accurate to close to machine precision.
///
/// Uses the positive-term confluent series below `|x| = 5` (no cancellation)
/// and a continued fraction for the complement above.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x > 5.0 {
        return 1.0 - erfc(x);
    }
    // erf(x) = 2x/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n / (2n+1)!!
    let x2 = x * x;
    let two_x2 = 2.0 * x2;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut odd = 1.0;
    for _ in 0..200 {
        odd += 2.0;
        term *= two_x2 / odd;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    FRAC_2_SQRT_PI * x * (-x2).exp() * sum
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 5.0 {
        return 1.0 - erf(x);
    }
    // Continued fraction erfc(x) = exp(-x^2)/sqrt(pi) *
    //   1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), evaluated by Lentz.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = f64::MAX;
    let mut d = 0.0_f64;
    for n in 1..200 {
        let a = n as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

// Acklam's rational approximation of the standard normal quantile,
// |relative error| < 1.15e-9 before refinement.
const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Standard normal quantile `inv_phi(p)`, absolute accuracy better than 1e-9.
///
/// Rational initial guess plus one Newton step against the erf-based CDF.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError {
            what: "std_normal_quantile probability",
            value: p,
        });
    }
    const P_LOW: f64 = 0.02425;
    let x0 = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((ACKLAM_C[0] * q + ACKLAM_C[1]) * q + ACKLAM_C[2]) * q + ACKLAM_C[3]) * q
            + ACKLAM_C[4])
            * q
            + ACKLAM_C[5])
            / ((((ACKLAM_D[0] * q + ACKLAM_D[1]) * q + ACKLAM_D[2]) * q + ACKLAM_D[3]) * q + 1.0)
    } else if p > 1.0 - P_LOW {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((ACKLAM_C[0] * q + ACKLAM_C[1]) * q + ACKLAM_C[2]) * q + ACKLAM_C[3]) * q
            + ACKLAM_C[4])
            * q
            + ACKLAM_C[5])
            / ((((ACKLAM_D[0] * q + ACKLAM_D[1]) * q + ACKLAM_D[2]) * q + ACKLAM_D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((ACKLAM_A[0] * r + ACKLAM_A[1]) * r + ACKLAM_A[2]) * r + ACKLAM_A[3]) * r
            + ACKLAM_A[4])
            * r
            + ACKLAM_A[5])
            * q
            / (((((ACKLAM_B[0] * r + ACKLAM_B[1]) * r + ACKLAM_B[2]) * r + ACKLAM_B[3]) * r
                + ACKLAM_B[4])
                * r
                + 1.0)
    };
    let pdf = normal_pdf(x0);
    if pdf > 0.0 {
        Ok(x0 - (normal_cdf(x0) - p) / pdf)
    } else {
        Ok(x0)
    }
}

/// Violation tolerance of a chance constraint, in `(0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityLevel {
    epsilon: f64,
}

impl ReliabilityLevel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::DomainError {
                what: "reliability epsilon",
                value: epsilon,
            });
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Distribution form used when turning a parameter into a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamForm {
    Gaussian,
    Empirical,
}

/// An uncertain scalar bound: a fitted Gaussian, optionally backed by the
/// empirical samples it was fitted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticParam {
    mean: f64,
    std: f64,
    samples: Option<Vec<f64>>,
    form: ParamForm,
}

impl StochasticParam {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        if !(std.is_finite() && std >= 0.0) || !mean.is_finite() {
            return Err(Error::InvalidInput {
                what: "StochasticParam",
                why: format!("need finite mean and std >= 0, got {mean} / {std}"),
            });
        }
        Ok(Self {
            mean,
            std,
            samples: None,
            form: ParamForm::Gaussian,
        })
    }

    /// Fits an unbiased Gaussian to `samples` and keeps them; `form` selects
    /// which representation thresholds are taken from.
    pub fn from_samples(samples: Vec<f64>, form: ParamForm) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput {
                what: "StochasticParam",
                why: "empirical form requires at least one sample".into(),
            });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput {
                what: "StochasticParam",
                why: "samples must be finite".into(),
            });
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std,
            samples: Some(samples),
            form,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn form(&self) -> ParamForm {
        self.form
    }

    pub fn samples(&self) -> Option<&[f64]> {
        self.samples.as_deref()
    }

    /// Nearest-rank `q`-quantile of the stored samples.
    fn sample_quantile(&self, q: f64) -> f64 {
        let samples = self
            .samples
            .as_ref()
            .expect("empirical form always stores samples");
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
        sorted[rank.min(sorted.len()) - 1]
    }

    /// Threshold `v` such that `v <= a'x` enforces `Pr(b <= a'x) >= 1-eps`:
    /// the `(1-eps)`-quantile of `b`.
    pub fn deterministic_lower(&self, eps: ReliabilityLevel) -> f64 {
        match self.form {
            ParamForm::Gaussian => {
                let z = std_normal_quantile(eps.epsilon()).expect("epsilon checked in (0, 0.5]");
                self.mean - z * self.std
            }
            ParamForm::Empirical => self.sample_quantile(1.0 - eps.epsilon()),
        }
    }

    /// Threshold `v` such that `a'x <= v` enforces `Pr(a'x <= b) >= 1-eps`:
    /// the `eps`-quantile of `b`.
    pub fn deterministic_upper(&self, eps: ReliabilityLevel) -> f64 {
        match self.form {
            ParamForm::Gaussian => {
                let z = std_normal_quantile(eps.epsilon()).expect("epsilon checked in (0, 0.5]");
                self.mean + z * self.std
            }
            ParamForm::Empirical => self.sample_quantile(eps.epsilon()),
        }
    }
}
