//! Browser bindings for the GPD tail-fitting demo page.
//!
//! Each exported function takes plain numbers and returns either an SVG
//! document or a JSON string, so the page needs no bundler or framework.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use gpdgan::evaluation::{pdf_curve, qq_report, QqReport};
use gpdgan::gan::{train, GanConfig};
use gpdgan::svg::{Chart, Mark, Series};
use gpdgan::{mle_fit, mom_fit, GpdParams, Method, RngStream};

const CURVE_POINTS: usize = 240;

fn color(m: Method) -> &'static str {
    match m {
        Method::Mom => "#2a9d8f",
        Method::Mle => "#d1495b",
        Method::Gan => "#3d5a80",
    }
}

/// Upper end of a plot window covering 99% of the mass of every curve.
fn plot_extent(params: &[GpdParams]) -> gpdgan::Result<f64> {
    let mut top: f64 = 0.0;
    for p in params {
        top = top.max(p.quantile(0.99)?);
    }
    Ok(top)
}

fn clipped_curve(p: &GpdParams, y_max: f64) -> gpdgan::Result<Vec<(f64, f64)>> {
    // a bounded support may end before the window does
    let end = p.upper_bound().map_or(y_max, |ub| ub.min(y_max) * (1.0 - 1e-9));
    pdf_curve(p, end, CURVE_POINTS)
}

/// Density chart of a reference GPD and a second one for comparison.
pub fn density_chart(shape: f64, scale: f64, other_shape: f64, other_scale: f64) -> gpdgan::Result<String> {
    let a = GpdParams::new(shape, scale)?;
    let b = GpdParams::new(other_shape, other_scale)?;
    let y_max = plot_extent(&[a, b])?;
    let chart = Chart::new("GPD density", "exceedance y", "density")
        .with_series(Series::new(
            format!("shape {shape}, scale {scale}"),
            "#222",
            Mark::Line,
            clipped_curve(&a, y_max)?,
        ))
        .with_series(Series::new(
            format!("shape {other_shape}, scale {other_scale}"),
            "#d1495b",
            Mark::Line,
            clipped_curve(&b, y_max)?,
        ));
    Ok(chart.render())
}

/// q-q slope error of a fitted GPD against the truth on a `k`-point grid.
pub fn slope_error(fit_shape: f64, fit_scale: f64, true_shape: f64, true_scale: f64, k: usize) -> gpdgan::Result<f64> {
    let fitted = GpdParams::new(fit_shape, fit_scale)?;
    let truth = GpdParams::new(true_shape, true_scale)?;
    Ok(qq_report(&fitted, &truth, k)?.slope_error)
}

#[derive(Debug, Serialize)]
pub struct FitRow {
    pub method: Method,
    pub shape: Option<f64>,
    pub scale: Option<f64>,
    pub slope_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Experiment {
    pub n: usize,
    pub sample_mean: f64,
    pub fits: Vec<FitRow>,
    pub qq_svg: String,
    pub pdf_svg: String,
}

/// Samples `n` exceedances, fits every estimator and charts the result.
/// `gan_epochs` bounds the browser-side training time.
pub fn experiment(shape: f64, scale: f64, n: usize, seed: u64, gan_epochs: usize) -> gpdgan::Result<Experiment> {
    let truth = GpdParams::new(shape, scale)?;
    let data = truth.sample(n, &mut RngStream::new(seed))?;
    let gan_cfg = GanConfig {
        epochs: gan_epochs,
        seed,
        ..GanConfig::default()
    };

    let mut fits = Vec::new();
    let mut good: Vec<(Method, GpdParams, QqReport)> = Vec::new();
    for method in Method::ALL {
        let fitted = match method {
            Method::Mom => mom_fit(&data),
            Method::Mle => mle_fit(&data),
            Method::Gan => train(&data, &gan_cfg).map(|(f, _)| f),
        }
        .and_then(|f| Ok((f.params, qq_report(&f.params, &truth, 100)?)));
        match fitted {
            Ok((p, qq)) => {
                fits.push(FitRow {
                    method,
                    shape: Some(p.shape()),
                    scale: Some(p.scale()),
                    slope_error: Some(qq.slope_error),
                    error: None,
                });
                good.push((method, p, qq));
            }
            Err(e) => fits.push(FitRow {
                method,
                shape: None,
                scale: None,
                slope_error: None,
                error: Some(e.to_string()),
            }),
        }
    }

    let mut qq_chart = Chart::new(format!("q-q against truth, n = {n}"), "true quantile", "fitted quantile").with_diagonal();
    let y_max = truth.quantile(0.99)?;
    let mut pdf_chart = Chart::new(format!("fitted densities, n = {n}"), "exceedance y", "density")
        .with_series(Series::new("truth", "#222", Mark::Line, clipped_curve(&truth, y_max)?));
    for (method, p, qq) in &good {
        let pts = qq.true_q.iter().copied().zip(qq.fitted_q.iter().copied()).collect();
        qq_chart = qq_chart.with_series(Series::new(
            format!("{method} (1-M = {:.3})", qq.slope_error),
            color(*method),
            Mark::Dots,
            pts,
        ));
        pdf_chart = pdf_chart.with_series(Series::new(method.as_str(), color(*method), Mark::Line, clipped_curve(p, y_max)?));
    }

    Ok(Experiment {
        n,
        sample_mean: data.mean().unwrap_or(f64::NAN),
        fits,
        qq_svg: qq_chart.render(),
        pdf_svg: pdf_chart.render(),
    })
}

fn js_err(e: gpdgan::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = densityChart)]
pub fn density_chart_js(shape: f64, scale: f64, other_shape: f64, other_scale: f64) -> Result<String, JsError> {
    density_chart(shape, scale, other_shape, other_scale).map_err(js_err)
}

#[wasm_bindgen(js_name = slopeError)]
pub fn slope_error_js(fit_shape: f64, fit_scale: f64, true_shape: f64, true_scale: f64, k: usize) -> Result<f64, JsError> {
    slope_error(fit_shape, fit_scale, true_shape, true_scale, k).map_err(js_err)
}

/// Returns the experiment as a JSON string.
#[wasm_bindgen(js_name = runExperiment)]
pub fn experiment_js(shape: f64, scale: f64, n: usize, seed: u32, gan_epochs: usize) -> Result<String, JsError> {
    let e = experiment(shape, scale, n, u64::from(seed), gan_epochs).map_err(js_err)?;
    serde_json::to_string(&e).map_err(|e| JsError::new(&e.to_string()))
}
