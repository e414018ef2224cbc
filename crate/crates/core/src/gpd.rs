//! Generalized Pareto Distribution and peaks-over-threshold preparation.
//!
//! The distribution is parameterized by shape `ζ` and (modified) scale `σ̃`:
//!
//! ```text
//! F(y) = 1 - (1 + ζ y / σ̃)^(-1/ζ)      ζ != 0
//! F(y) = 1 - exp(-y / σ̃)               ζ == 0
//! ```
//!
//! Support is `[0, ∞)` for `ζ >= 0` and `[0, -σ̃/ζ]` for `ζ < 0`. Shapes with
//! `|ζ| < SHAPE_EPS` evaluate through the exponential limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Below this magnitude the shape is treated as exactly zero.
pub const SHAPE_EPS: f64 = 1e-9;

/// Admissible shape interval.
pub const SHAPE_MIN: f64 = -1.0;
pub const SHAPE_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct GpdParams {
    shape: f64,
    scale: f64,
}

#[derive(Deserialize)]
struct RawParams {
    shape: f64,
    scale: f64,
}

impl TryFrom<RawParams> for GpdParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        GpdParams::new(raw.shape, raw.scale)
    }
}

impl GpdParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !shape.is_finite() || !(SHAPE_MIN..=SHAPE_MAX).contains(&shape) {
            return Err(Error::InvalidParams(format!(
                "shape {shape} outside [{SHAPE_MIN}, {SHAPE_MAX}]"
            )));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidParams(format!("scale {scale} must be > 0")));
        }
        Ok(Self { shape, scale })
    }

    /// Exponential distribution with the given scale.
    pub fn exponential(scale: f64) -> Result<Self> {
        Self::new(0.0, scale)
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn is_exponential(&self) -> bool {
        self.shape.abs() < SHAPE_EPS
    }

    /// Right endpoint of the support, finite only for negative shape.
    pub fn upper_bound(&self) -> Option<f64> {
        (self.shape < 0.0 && !self.is_exponential()).then(|| -self.scale / self.shape)
    }

    pub fn in_support(&self, y: f64) -> bool {
        y >= 0.0 && self.upper_bound().is_none_or(|ub| y <= ub)
    }

    fn check_support(&self, y: f64) -> Result<()> {
        if y.is_nan() || !self.in_support(y) {
            return Err(Error::Domain(format!(
                "y = {y} outside support of GPD(shape={}, scale={})",
                self.shape, self.scale
            )));
        }
        Ok(())
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.check_support(y)?;
        if self.is_exponential() {
            return Ok(-(-y / self.scale).exp_m1());
        }
        let z = self.shape * y / self.scale;
        if z <= -1.0 {
            return Ok(1.0);
        }
        // 1 - (1+z)^(-1/ζ) = -expm1(-ln1p(z)/ζ)
        Ok(-(-z.ln_1p() / self.shape).exp_m1())
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.check_support(y)?;
        Ok(self.ln_pdf_unchecked(y).exp())
    }

    /// Log-density; negative infinity outside the support.
    pub fn ln_pdf(&self, y: f64) -> f64 {
        if y.is_nan() || !self.in_support(y) {
            return f64::NEG_INFINITY;
        }
        self.ln_pdf_unchecked(y)
    }

    fn ln_pdf_unchecked(&self, y: f64) -> f64 {
        if self.is_exponential() {
            return -y / self.scale - self.scale.ln();
        }
        let z = self.shape * y / self.scale;
        let exponent = -1.0 / self.shape - 1.0;
        if z <= -1.0 {
            // At the endpoint of a bounded support: density is 0 for ζ > -1 and
            // 1/σ̃ (uniform) for ζ = -1.
            return if exponent == 0.0 {
                -self.scale.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        exponent * z.ln_1p() - self.scale.ln()
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&prob) {
            return Err(Error::Domain(format!("probability {prob} outside [0, 1)")));
        }
        Ok(self.quantile_unchecked(prob))
    }

    fn quantile_unchecked(&self, prob: f64) -> f64 {
        // L = -ln(1 - p) is the standard exponential quantile.
        let l = -(-prob).ln_1p();
        if self.is_exponential() {
            self.scale * l
        } else {
            self.scale * (self.shape * l).exp_m1() / self.shape
        }
    }

    /// `σ̃ / (1 - ζ)`, infinite for `ζ >= 1`.
    pub fn mean(&self) -> f64 {
        if self.shape >= 1.0 {
            f64::INFINITY
        } else {
            self.scale / (1.0 - self.shape)
        }
    }

    /// `σ̃² / ((1 - ζ)² (1 - 2ζ))`, infinite for `ζ >= 1/2`.
    pub fn variance(&self) -> f64 {
        if self.shape >= 0.5 {
            f64::INFINITY
        } else {
            let d = 1.0 - self.shape;
            self.scale * self.scale / (d * d * (1.0 - 2.0 * self.shape))
        }
    }

    /// `n` i.i.d. draws by inverse transform.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<ExceedanceSet> {
        if n == 0 {
            return Err(Error::Domain("sample size must be >= 1".into()));
        }
        Ok(ExceedanceSet {
            values: self.sample_values(n, rng),
            threshold: None,
        })
    }

    pub(crate) fn sample_values(&self, n: usize, rng: &mut RngStream) -> Vec<f64> {
        (0..n).map(|_| self.quantile_unchecked(rng.uniform())).collect()
    }

    /// Sum of log-densities; negative infinity if any value is outside the support.
    pub fn log_likelihood(&self, data: &ExceedanceSet) -> f64 {
        let mut total = 0.0;
        for &y in data.values() {
            let l = self.ln_pdf(y);
            if l == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += l;
        }
        total
    }
}

/// A GPD draw written as a differentiable function of its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReparamSample {
    pub value: f64,
    pub d_shape: f64,
    pub d_scale: f64,
}

/// `y = quantile((shape, scale), u)` with partial derivatives at fixed `u`.
///
/// With `L = -ln(1 - u)` and `t = shape * L`:
/// `y = scale * L * expm1(t)/t` and `dy/dshape = scale * L² * (t e^t - expm1(t))/t²`.
/// Both ratios switch to their Taylor series near `t = 0`.
pub fn reparam_sample(shape: f64, scale: f64, u: f64) -> ReparamSample {
    let l = -(-u).ln_1p();
    let t = shape * l;
    let (ratio1, ratio2) = if t.abs() < 1e-3 {
        // expm1(t)/t = Σ t^k/(k+1)!,  (t e^t - expm1 t)/t² = Σ (k+1) t^k/(k+2)!
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t2 * t2;
        (
            1.0 + t / 2.0 + t2 / 6.0 + t3 / 24.0 + t4 / 120.0,
            0.5 + t / 3.0 + t2 / 8.0 + t3 / 30.0 + t4 * 5.0 / 720.0,
        )
    } else {
        let em1 = t.exp_m1();
        (em1 / t, (t * t.exp() - em1) / (t * t))
    };
    let value = scale * l * ratio1;
    ReparamSample {
        value,
        d_shape: scale * l * l * ratio2,
        d_scale: l * ratio1,
    }
}

/// Non-negative threshold exceedances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExceedanceSet {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
}

impl ExceedanceSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "exceedance {bad} is not a finite non-negative number"
            )));
        }
        Ok(Self {
            values,
            threshold: None,
        })
    }

    /// Lower-tail exceedances `u - x` for every sample `x < u`, in input order.
    pub fn extract(samples: &[f64], threshold: f64) -> Self {
        let values = samples
            .iter()
            .filter(|&&x| x < threshold)
            .map(|&x| threshold - x)
            .collect();
        Self {
            values,
            threshold: Some(threshold),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.values.iter().sum::<f64>() / self.n() as f64)
    }

    /// Unbiased (n - 1) sample variance.
    pub fn variance(&self) -> Option<f64> {
        if self.n() < 2 {
            return None;
        }
        let m = self.mean()?;
        let ss: f64 = self.values.iter().map(|v| (v - m) * (v - m)).sum();
        Some(ss / (self.n() - 1) as f64)
    }
}
