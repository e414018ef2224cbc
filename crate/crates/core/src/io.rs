//! File formats: numeric CSV columns, fit-result JSON and plot data tables.
//!
//! Value files hold one number per line. Blank lines and lines starting with
//! `#` are ignored. Every table writer emits a header row followed by
//! shortest-roundtrip decimal floats, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Diagnostics, FitResult, Method};
use crate::evaluation::{QqReport, SweepResult};
use crate::gan::TrainReport;
use crate::gpd::GpdParams;

/// Version tag carried by every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

pub fn read_values<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let v: f64 = text
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: '{text}' is not a number", idx + 1)))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("line {}: non-finite value", idx + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_values<W: Write>(mut w: W, comments: &[String], values: &[f64]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// JSON document produced by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub method: Method,
    pub shape: f64,
    pub scale: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl FitDocument {
    pub fn from_fit(fit: &FitResult, seed: Option<u64>, threshold: Option<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            method: fit.method,
            shape: fit.params.shape(),
            scale: fit.params.scale(),
            n: fit.n,
            seed,
            threshold,
            diagnostics: fit.diagnostics.clone(),
        }
    }

    pub fn params(&self) -> Result<GpdParams> {
        GpdParams::new(self.shape, self.scale)
    }

    /// Parses and validates a document, rejecting unknown schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FitDocument = serde_json::from_str(text)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        doc.params()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Machine-readable error report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDocument {
    pub schema_version: u32,
    pub error: String,
    pub message: String,
}

impl ErrorDocument {
    pub fn new(err: &Error) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            error: err.kind().to_string(),
            message: err.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain strings serialize")
    }
}

pub fn loss_history_csv(report: &TrainReport) -> String {
    let mut s = String::from("step,g_loss,d_fake_loss,d_real_loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", l.generator, l.discriminator_fake, l.discriminator_real);
    }
    s
}

pub fn qq_csv(report: &QqReport) -> String {
    let mut s = String::from("prob,true_q,fitted_q\n");
    for ((p, t), f) in report.probs.iter().zip(&report.true_q).zip(&report.fitted_q) {
        let _ = writeln!(s, "{p},{t},{f}");
    }
    s
}

pub fn pdf_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("y,density\n");
    for (y, d) in curve {
        let _ = writeln!(s, "{y},{d}");
    }
    s
}

/// One row per (size, method, trial); failed fits leave the estimate columns empty.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::from("size,method,trial,shape_hat,scale_hat,slope_error,failed\n");
    for row in &result.rows {
        let o = &row.outcome;
        let (shape, scale) = o
            .fit
            .as_ref()
            .map(|f| (f.params.shape().to_string(), f.params.scale().to_string()))
            .unwrap_or_default();
        let se = o.slope_error().map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{shape},{scale},{se},{}",
            row.size,
            o.method,
            row.trial,
            o.failed()
        );
    }
    s
}

/// Aggregates per (size, method).
pub fn summary_csv(result: &SweepResult) -> String {
    let mut s = String::from(
        "size,method,trials,failures,failure_rate,mean_abs_slope_error,std_abs_slope_error,mean_shape,mean_scale\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &result.summary {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.size,
            c.method,
            c.trials,
            c.failures,
            c.failure_rate(),
            opt(c.mean_abs_slope_error),
            opt(c.std_abs_slope_error),
            opt(c.mean_shape),
            opt(c.mean_scale)
        );
    }
    s
}

/// Fixed-width text table of the sweep aggregates.
pub fn summary_table(result: &SweepResult) -> String {
    let mut s = format!(
        "{:>6}  {:<6} {:>7} {:>9} {:>12} {:>10} {:>10}\n",
        "size", "method", "trials", "failures", "mean|1-M|", "std", "mean_shape"
    );
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for c in &result.summary {
        let _ = writeln!(
            s,
            "{:>6}  {:<6} {:>7} {:>9} {:>12} {:>10} {:>10}",
            c.size,
            c.method.as_str(),
            c.trials,
            c.failures,
            f(c.mean_abs_slope_error),
            f(c.std_abs_slope_error),
            f(c.mean_shape)
        );
    }
    s
}
