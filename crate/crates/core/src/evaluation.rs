//! q-q slope error, density curves and the sample-size sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mle_fit, mom_fit, FitResult, Method};
use crate::gan::{self, GanConfig, TrainReport};
use crate::gpd::{ExceedanceSet, GpdParams};
use crate::rng::{derive_seed, RngStream};

/// Default number of q-q grid points.
pub const DEFAULT_QQ_POINTS: usize = 100;

/// Default sample sizes of the sweep experiment.
pub const DEFAULT_SWEEP_SIZES: [usize; 4] = [2000, 50, 20, 10];

const GAN_STREAM: u64 = 0x6a4;

/// Quantiles of a fitted and a reference distribution on a shared probability grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqPairs {
    pub probs: Vec<f64>,
    pub true_q: Vec<f64>,
    pub fitted_q: Vec<f64>,
}

/// q-q pairs with their least-squares line; `slope_error = 1 - slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqReport {
    pub probs: Vec<f64>,
    pub true_q: Vec<f64>,
    pub fitted_q: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_error: f64,
}

/// Pairs `(quantile(truth, p), quantile(fitted, p))` at `p = (i - 0.5)/k`.
pub fn qq_points(fitted: &GpdParams, truth: &GpdParams, k: usize) -> Result<QqPairs> {
    if k < 2 {
        return Err(Error::Domain(format!("q-q grid needs at least 2 points, got {k}")));
    }
    let probs: Vec<f64> = (1..=k).map(|i| (i as f64 - 0.5) / k as f64).collect();
    let true_q = probs.iter().map(|&p| truth.quantile(p)).collect::<Result<_>>()?;
    let fitted_q = probs.iter().map(|&p| fitted.quantile(p)).collect::<Result<_>>()?;
    Ok(QqPairs {
        probs,
        true_q,
        fitted_q,
    })
}

/// Ordinary least squares of fitted on true quantiles, with intercept.
pub fn slope_error(pairs: &QqPairs) -> Result<QqReport> {
    let (x, y) = (&pairs.true_q, &pairs.fitted_q);
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Domain("slope needs at least 2 pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        sxx += dx * dx;
        sxy += dx * (yi - my);
    }
    if !(sxx.is_finite() && sxx > 0.0) {
        return Err(Error::Domain("true quantiles are degenerate".into()));
    }
    let slope = sxy / sxx;
    if !slope.is_finite() {
        return Err(Error::Domain(format!("non-finite slope {slope}")));
    }
    Ok(QqReport {
        probs: pairs.probs.clone(),
        true_q: x.clone(),
        fitted_q: y.clone(),
        slope,
        intercept: my - slope * mx,
        slope_error: 1.0 - slope,
    })
}

/// Convenience: q-q pairs on a `k`-point grid and their slope error.
pub fn qq_report(fitted: &GpdParams, truth: &GpdParams, k: usize) -> Result<QqReport> {
    slope_error(&qq_points(fitted, truth, k)?)
}

/// Density on a uniform grid over `[0, y_max]`.
pub fn pdf_curve(p: &GpdParams, y_max: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(Error::Domain(format!("curve needs at least 2 points, got {points}")));
    }
    if !(y_max > 0.0 && p.in_support(y_max)) {
        return Err(Error::Domain(format!("y_max {y_max} outside the support")));
    }
    (0..points)
        .map(|i| {
            let y = y_max * i as f64 / (points - 1) as f64;
            Ok((y, p.pdf(y)?))
        })
        .collect()
}

/// Outcome of one estimator on one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// `None` when the estimator failed; see `error`.
    pub fit: Option<FitResult>,
    pub qq: Option<QqReport>,
    pub error: Option<String>,
    #[serde(skip)]
    pub train_report: Option<TrainReport>,
}

impl MethodOutcome {
    pub fn slope_error(&self) -> Option<f64> {
        self.qq.as_ref().map(|q| q.slope_error)
    }

    pub fn failed(&self) -> bool {
        self.qq.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSettings<'a> {
    pub methods: &'a [Method],
    pub gan: &'a GanConfig,
    pub qq_points: usize,
}

fn fit_method(method: Method, data: &ExceedanceSet, gan_cfg: &GanConfig) -> Result<(FitResult, Option<TrainReport>)> {
    match method {
        Method::Mom => mom_fit(data).map(|f| (f, None)),
        Method::Mle => mle_fit(data).map(|f| (f, None)),
        Method::Gan => gan::train(data, gan_cfg).map(|(f, r)| (f, Some(r))),
    }
}

/// Fits every requested method to one dataset drawn with `seed`.
/// Estimator failures are recorded in the outcome rather than returned.
pub fn run_trial(
    truth: &GpdParams,
    n: usize,
    seed: u64,
    settings: &TrialSettings<'_>,
) -> Result<Vec<MethodOutcome>> {
    if n < 2 {
        return Err(Error::Domain(format!("trial size must be >= 2, got {n}")));
    }
    let data = truth.sample(n, &mut RngStream::new(seed))?;
    let gan_cfg = GanConfig {
        seed: derive_seed(seed, &[GAN_STREAM]),
        ..settings.gan.clone()
    };
    Ok(settings
        .methods
        .iter()
        .map(|&method| {
            let scored = fit_method(method, &data, &gan_cfg).and_then(|(fit, report)| {
                let qq = qq_report(&fit.params, truth, settings.qq_points)?;
                Ok((fit, qq, report))
            });
            match scored {
                Ok((fit, qq, report)) => MethodOutcome {
                    method,
                    fit: Some(fit),
                    qq: Some(qq),
                    error: None,
                    train_report: report,
                },
                Err(e) => MethodOutcome {
                    method,
                    fit: None,
                    qq: None,
                    error: Some(e.to_string()),
                    train_report: None,
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub trial: usize,
    pub seed: u64,
    pub outcome: MethodOutcome,
}

/// Aggregate of `|slope_error|` over the successful trials of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub size: usize,
    pub method: Method,
    pub trials: usize,
    pub failures: usize,
    pub mean_abs_slope_error: Option<f64>,
    pub std_abs_slope_error: Option<f64>,
    pub mean_shape: Option<f64>,
    pub mean_scale: Option<f64>,
}

impl CellSummary {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub truth: GpdParams,
    pub master_seed: u64,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<CellSummary>,
}

impl SweepResult {
    pub fn cell(&self, size: usize, method: Method) -> Option<&CellSummary> {
        self.summary.iter().find(|c| c.size == size && c.method == method)
    }
}

/// Seed of trial `trial` at sample size `size`.
pub fn trial_seed(master_seed: u64, size: usize, trial: usize) -> u64 {
    derive_seed(master_seed, &[size as u64, trial as u64])
}

/// Repeats [`run_trial`] over every `(size, trial)` cell. Each cell has its own
/// derived seed, so the result does not depend on execution order.
pub fn run_sweep(
    truth: &GpdParams,
    sizes: &[usize],
    trials: usize,
    master_seed: u64,
    settings: &TrialSettings<'_>,
) -> Result<SweepResult> {
    if sizes.is_empty() {
        return Err(Error::InvalidParams("sweep needs at least one sample size".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParams("sweep needs at least one trial".into()));
    }
    if settings.methods.is_empty() {
        return Err(Error::InvalidParams("sweep needs at least one method".into()));
    }
    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..trials).map(move |t| (s, t)))
        .collect();

    let run = |&(size, trial): &(usize, usize)| -> Result<Vec<SweepRow>> {
        let seed = trial_seed(master_seed, size, trial);
        Ok(run_trial(truth, size, seed, settings)?
            .into_iter()
            .map(|outcome| SweepRow {
                size,
                trial,
                seed,
                outcome,
            })
            .collect())
    };

    #[cfg(feature = "parallel")]
    let per_cell: Vec<Result<Vec<SweepRow>>> = {
        use rayon::prelude::*;
        cells.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_cell: Vec<Result<Vec<SweepRow>>> = cells.iter().map(run).collect();

    let mut rows = Vec::with_capacity(cells.len() * settings.methods.len());
    for cell in per_cell {
        rows.extend(cell?);
    }
    let summary = summarize(&rows, sizes, settings.methods);
    Ok(SweepResult {
        truth: *truth,
        master_seed,
        rows,
        summary,
    })
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let s = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (Some(m), Some(s))
}

fn summarize(rows: &[SweepRow], sizes: &[usize], methods: &[Method]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &size in sizes {
        for &method in methods {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.size == size && r.outcome.method == method)
                .collect();
            let errs: Vec<f64> = cell.iter().filter_map(|r| r.outcome.slope_error()).map(f64::abs).collect();
            let fits: Vec<&FitResult> = cell.iter().filter_map(|r| r.outcome.fit.as_ref()).collect();
            let (mean, std) = mean_std(&errs);
            let shapes: Vec<f64> = fits.iter().map(|f| f.params.shape()).collect();
            let scales: Vec<f64> = fits.iter().map(|f| f.params.scale()).collect();
            out.push(CellSummary {
                size,
                method,
                trials: cell.len(),
                failures: cell.len() - errs.len(),
                mean_abs_slope_error: mean,
                std_abs_slope_error: std,
                mean_shape: mean_std(&shapes).0,
                mean_scale: mean_std(&scales).0,
            });
        }
    }
    out
}
