//! Method-of-moments and maximum-likelihood GPD fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{ExceedanceSet, GpdParams};

/// Shape estimates are clamped into `[-SHAPE_CLAMP, SHAPE_CLAMP]`.
pub const SHAPE_CLAMP: f64 = 0.99;

/// Points per side of zero in the coarse profile-likelihood grid.
const GRID_PER_SIDE: usize = 200;
/// Smallest `|θ|` on the coarse grid, relative to the side's extent.
const GRID_SPAN: f64 = 1e-8;
const GOLDEN_TOL: f64 = 1e-10;
const GOLDEN_MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mom,
    Mle,
    Gan,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mom, Method::Mle, Method::Gan];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mom => "mom",
            Method::Mle => "mle",
            Method::Gan => "gan",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mom" => Ok(Method::Mom),
            "mle" => Ok(Method::Mle),
            "gan" => Ok(Method::Gan),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// The raw shape estimate fell outside the clamp interval.
    #[serde(default)]
    pub shape_clamped: bool,
    /// The likelihood maximum sits on the edge of the admissible shape range.
    #[serde(default)]
    pub boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_shape: Option<f64>,
    /// Argmax of the profile likelihood.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Number of noise batches averaged into a GAN estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_batches: Option<usize>,
    /// Spread of per-batch shape outputs behind a GAN estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_batch_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GpdParams,
    pub method: Method,
    pub n: usize,
    pub diagnostics: Diagnostics,
}

fn clamp_shape(shape: f64) -> (f64, bool) {
    let c = shape.clamp(-SHAPE_CLAMP, SHAPE_CLAMP);
    (c, c != shape)
}

/// Ascending copy of the data. Both estimators sum over it so that their
/// results are bit-identical under any permutation of the input.
fn canonical(data: &ExceedanceSet) -> ExceedanceSet {
    let mut v = data.values().to_vec();
    v.sort_unstable_by(f64::total_cmp);
    ExceedanceSet::new(v).expect("values were already validated")
}

/// Moment inversion: `ζ = (1 - m²/s²)/2`, `σ̃ = m (1 + m²/s²)/2`.
pub fn mom_fit(data: &ExceedanceSet) -> Result<FitResult> {
    let data = &canonical(data);
    let n = data.n();
    if n < 2 {
        return Err(Error::DegenerateData(format!("need at least 2 values, got {n}")));
    }
    let mean = data.mean().expect("n >= 2");
    let var = data.variance().expect("n >= 2");
    if mean <= 0.0 {
        return Err(Error::DegenerateData(format!("sample mean {mean} must be > 0")));
    }
    if var <= 0.0 {
        return Err(Error::DegenerateData("sample variance is zero".into()));
    }
    let ratio = mean * mean / var;
    let raw_shape = 0.5 * (1.0 - ratio);
    let scale = 0.5 * mean * (1.0 + ratio);
    let (shape, clamped) = clamp_shape(raw_shape);
    let params = GpdParams::new(shape, scale)?;
    let ll = params.log_likelihood(data);
    Ok(FitResult {
        params,
        method: Method::Mom,
        n,
        diagnostics: Diagnostics {
            log_likelihood: ll.is_finite().then_some(ll),
            shape_clamped: clamped,
            raw_shape: clamped.then_some(raw_shape),
            ..Default::default()
        },
    })
}

/// One evaluation of the profile likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub theta: f64,
    pub log_likelihood: f64,
    /// `(1/n) Σ ln(1 + θ y)`; NaN when infeasible.
    pub shape: f64,
    /// `shape / θ`, or the sample mean at `θ = 0`.
    pub scale: f64,
}

impl ProfilePoint {
    pub fn is_feasible(&self) -> bool {
        self.log_likelihood.is_finite()
    }

    pub fn params(&self) -> Result<GpdParams> {
        GpdParams::new(self.shape, self.scale)
    }
}

/// Profile log-likelihood at `θ = ζ/σ̃`, maximized analytically over the remaining parameter.
pub fn profile_loglik(theta: f64, data: &ExceedanceSet) -> ProfilePoint {
    let n = data.n() as f64;
    let infeasible = ProfilePoint {
        theta,
        log_likelihood: f64::NEG_INFINITY,
        shape: f64::NAN,
        scale: f64::NAN,
    };
    if data.is_empty() || !theta.is_finite() {
        return infeasible;
    }
    if theta == 0.0 {
        let mean = data.mean().expect("non-empty");
        if mean <= 0.0 {
            return infeasible;
        }
        return ProfilePoint {
            theta,
            log_likelihood: -n * mean.ln() - n,
            shape: 0.0,
            scale: mean,
        };
    }
    let mut sum = 0.0;
    for &y in data.values() {
        let a = theta * y;
        if a <= -1.0 {
            return infeasible;
        }
        sum += a.ln_1p();
    }
    let shape = sum / n;
    let scale = shape / theta;
    if !(scale.is_finite() && scale > 0.0) {
        return infeasible;
    }
    ProfilePoint {
        theta,
        log_likelihood: -n * scale.ln() - n * (shape + 1.0),
        shape,
        scale,
    }
}

/// `θ` at which the profiled shape equals `target`, found by bisection on the
/// increasing map `θ ↦ (1/n) Σ ln(1 + θ y)` between `lo` and `hi`.
fn theta_for_shape(data: &ExceedanceSet, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let shape_at = |t: f64| profile_loglik(t, data).shape;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = shape_at(mid);
        if s.is_nan() || s < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-15 * hi.abs().max(lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Admissible `θ` interval: profiled shape within `[-SHAPE_CLAMP, SHAPE_CLAMP]`.
fn theta_bounds(data: &ExceedanceSet, ymax: f64, mean: f64) -> (f64, f64) {
    // θ → -1/ymax drives the profiled shape to -∞
    let lo_edge = -1.0 / ymax;
    let lo = theta_for_shape(data, -SHAPE_CLAMP, lo_edge, 0.0);
    let mut hi_edge = 1.0 / mean;
    while profile_loglik(hi_edge, data).shape < SHAPE_CLAMP {
        hi_edge *= 4.0;
        if !hi_edge.is_finite() {
            break;
        }
    }
    let hi = theta_for_shape(data, SHAPE_CLAMP, 0.0, hi_edge);
    (lo, hi)
}

/// Candidates: the bounds, zero, and log-spaced magnitudes on each side.
fn profile_grid(lo: f64, hi: f64) -> Vec<f64> {
    let side = |extent: f64| -> Vec<f64> {
        let top = extent.ln();
        let bottom = (extent * GRID_SPAN).ln();
        (0..GRID_PER_SIDE)
            .map(|i| (bottom + (top - bottom) * i as f64 / (GRID_PER_SIDE - 1) as f64).exp())
            .collect()
    };
    let mut grid: Vec<f64> = side(-lo).into_iter().rev().map(|m| -m).collect();
    grid.push(0.0);
    grid.extend(side(hi));
    grid[0] = lo;
    *grid.last_mut().unwrap() = hi;
    grid
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> Result<(f64, usize)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut trace = Vec::new();
    for iter in 0..GOLDEN_MAX_ITER {
        if (b - a).abs() < GOLDEN_TOL {
            return Ok((0.5 * (a + b), iter));
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        trace.push(fc.max(fd));
    }
    Err(Error::NonConvergence {
        iterations: GOLDEN_MAX_ITER,
        trace,
    })
}

/// Maximum likelihood through the one-dimensional profile in `θ = ζ/σ̃`.
///
/// A coarse grid over the admissible `θ` range locates the basin; golden-section
/// search then refines within the neighbouring grid cells.
pub fn mle_fit(data: &ExceedanceSet) -> Result<FitResult> {
    let data = &canonical(data);
    let n = data.n();
    if n < 2 {
        return Err(Error::DegenerateData(format!("need at least 2 values, got {n}")));
    }
    let ymax = data.max().expect("n >= 2");
    let ymin = data.values().iter().copied().fold(f64::INFINITY, f64::min);
    if ymax == ymin {
        return Err(Error::DegenerateData("all values are identical".into()));
    }
    let mean = data.mean().expect("n >= 2");

    let (lo, hi) = theta_bounds(data, ymax, mean);
    let grid = profile_grid(lo, hi);
    let values: Vec<f64> = grid.iter().map(|&t| profile_loglik(t, data).log_likelihood).collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::NonConvergence {
            iterations: grid.len(),
            trace: values.clone(),
        })?;

    let left = grid[best.saturating_sub(1)];
    let right = grid[(best + 1).min(grid.len() - 1)];
    let objective = |t: f64| profile_loglik(t, data).log_likelihood;
    let (refined, iterations) = golden_max(objective, left, right)?;

    // keep whichever of grid point and refinement is better; exact bounds are candidates too
    let mut point = profile_loglik(grid[best], data);
    for t in [refined, lo, hi] {
        let cand = profile_loglik(t, data);
        if cand.log_likelihood > point.log_likelihood {
            point = cand;
        }
    }

    let (shape, clamped) = clamp_shape(point.shape);
    let boundary = point.theta == lo || point.theta == hi || best == 0 || best == grid.len() - 1;
    let params = GpdParams::new(shape, point.scale)?;
    let ll = params.log_likelihood(data);
    Ok(FitResult {
        params,
        method: Method::Mle,
        n,
        diagnostics: Diagnostics {
            log_likelihood: Some(if ll.is_finite() { ll } else { point.log_likelihood }),
            iterations: Some(iterations + grid.len()),
            shape_clamped: clamped,
            boundary,
            raw_shape: clamped.then_some(point.shape),
            theta: Some(point.theta),
            ..Default::default()
        },
    })
}
