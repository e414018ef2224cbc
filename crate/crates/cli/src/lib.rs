//! Subcommands behind the `gpdgan` binary.
//!
//! Each command validates its whole configuration before touching the file
//! system, so a rejected invocation leaves no partial output behind.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use gpdgan::evaluation::{self, QqReport, SweepResult, TrialSettings};
use gpdgan::gan::{self, GanConfig};
use gpdgan::io::{self as gio, FitDocument};
use gpdgan::svg::{Chart, Mark, Series};
use gpdgan::{mle_fit, mom_fit, ExceedanceSet, FitResult, GpdParams, Method, RngStream};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or input data (exit code 2).
    #[error("{0}")]
    Validation(gpdgan::Error),
    /// I/O and other failures during execution (exit code 1).
    #[error("{0}")]
    Runtime(gpdgan::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn inner(&self) -> &gpdgan::Error {
        match self {
            CliError::Validation(e) | CliError::Runtime(e) => e,
        }
    }

    pub fn to_json(&self) -> String {
        gio::ErrorDocument::new(self.inner()).to_json()
    }

    fn usage(msg: impl Into<String>) -> Self {
        CliError::Validation(gpdgan::Error::InvalidParams(msg.into()))
    }
}

fn invalid(e: gpdgan::Error) -> CliError {
    CliError::Validation(e)
}

fn runtime(e: gpdgan::Error) -> CliError {
    CliError::Runtime(e)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(gpdgan::Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    )))
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Settings loadable from a JSON file; command-line flags override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub gan: GanConfig,
    pub qq_points: usize,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            gan: GanConfig::default(),
            qq_points: evaluation::DEFAULT_QQ_POINTS,
            sizes: evaluation::DEFAULT_SWEEP_SIZES.to_vec(),
            trials: 20,
            methods: Method::ALL.to_vec(),
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| {
            // a missing or unreadable config is a usage problem, not a runtime one
            CliError::Validation(gpdgan::Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            )))
        })?;
        serde_json::from_str(&text).map_err(|e| invalid(e.into()))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.gan.validate().map_err(invalid)?;
        if self.qq_points < 2 {
            return Err(CliError::usage("qq_points must be >= 2"));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 2) {
            return Err(CliError::usage("sizes must be a nonempty list of values >= 2"));
        }
        if self.trials == 0 {
            return Err(CliError::usage("trials must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(CliError::usage("methods must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gpdgan", version, about = "GPD tail fitting: moments, likelihood and adversarial estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw GPD exceedances and write them one per line.
    GenData(GenDataArgs),
    /// Estimate GPD parameters from a value file.
    Fit(FitArgs),
    /// Compare a fit with known parameters on a q-q grid.
    Evaluate(EvaluateArgs),
    /// Repeat fits over sample sizes and trials.
    Sweep(SweepArgs),
    /// Tabulate a GPD density.
    Pdf(PdfArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub shape: f64,
    #[arg(long)]
    pub scale: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long)]
    pub input: PathBuf,
    /// Treat the input as raw samples and fit the exceedances below this threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the GAN seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of GAN epochs from the configuration.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Result JSON path; printed to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-step GAN loss history (CSV).
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub true_shape: f64,
    #[arg(long)]
    pub true_scale: f64,
    #[arg(long, default_value_t = evaluation::DEFAULT_QQ_POINTS)]
    pub k: usize,
    /// q-q pairs (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional q-q scatter (SVG).
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.3)]
    pub shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write q-q and density charts per sample size.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PdfArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub shape: f64,
    #[arg(long)]
    pub scale: f64,
    #[arg(long)]
    pub y_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gpdgan::Error| e.to_string())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read_value_file(path: &Path) -> CliResult<Vec<f64>> {
    let file = fs::File::open(path).map_err(|e| {
        CliError::Validation(gpdgan::Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })?;
    gio::read_values(BufReader::new(file)).map_err(invalid)
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Fit(a) => fit(&a, stdout).map(|_| ()),
        Command::Evaluate(a) => {
            let report = evaluate(&a)?;
            writeln!(stdout, "{}", report.slope_error).map_err(|e| runtime(e.into()))
        }
        Command::Sweep(a) => sweep(&a, stdout).map(|_| ()),
        Command::Pdf(a) => pdf(&a),
    }
}

pub fn gen_data(args: &GenDataArgs) -> CliResult<()> {
    let params = GpdParams::new(args.shape, args.scale).map_err(invalid)?;
    let data = params
        .sample(args.n, &mut RngStream::new(args.seed))
        .map_err(invalid)?;
    let header = vec![format!(
        "gpd exceedances shape={} scale={} n={} seed={}",
        args.shape, args.scale, args.n, args.seed
    )];
    let mut buf = Vec::new();
    gio::write_values(&mut buf, &header, data.values()).map_err(runtime)?;
    write_file(&args.out, std::str::from_utf8(&buf).expect("ascii output"))
}

/// Loads the input, runs the estimator and writes the result document.
pub fn fit(args: &FitArgs, stdout: &mut dyn Write) -> CliResult<FitDocument> {
    let mut cfg = CliConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.gan.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.gan.epochs = epochs;
    }
    cfg.validate()?;

    let raw = read_value_file(&args.input)?;
    let data = match args.threshold {
        Some(u) => ExceedanceSet::extract(&raw, u),
        None => ExceedanceSet::new(raw).map_err(invalid)?,
    };

    let (result, report): (FitResult, _) = match args.method {
        Method::Mom => (mom_fit(&data).map_err(invalid)?, None),
        Method::Mle => (mle_fit(&data).map_err(invalid)?, None),
        Method::Gan => {
            // estimator preconditions first, so bad data maps to a validation error
            mom_fit(&data).map_err(invalid)?;
            let (f, r) = gan::train(&data, &cfg.gan).map_err(runtime)?;
            (f, Some(r))
        }
    };
    let seed = (args.method == Method::Gan).then_some(cfg.gan.seed);
    let doc = FitDocument::from_fit(&result, seed, args.threshold);
    let json = doc.to_json().map_err(runtime)?;
    match &args.out {
        Some(path) => write_file(path, &json)?,
        None => stdout.write_all(json.as_bytes()).map_err(|e| runtime(e.into()))?,
    }
    if let (Some(path), Some(report)) = (&args.loss_out, &report) {
        write_file(path, &gio::loss_history_csv(report))?;
    }
    Ok(doc)
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<QqReport> {
    let truth = GpdParams::new(args.true_shape, args.true_scale).map_err(invalid)?;
    let text = fs::read_to_string(&args.fit).map_err(|e| invalid(e.into()))?;
    let doc = FitDocument::from_json(&text).map_err(invalid)?;
    let fitted = doc.params().map_err(invalid)?;
    let report = evaluation::qq_report(&fitted, &truth, args.k).map_err(invalid)?;
    write_file(&args.out, &gio::qq_csv(&report))?;
    if let Some(svg) = &args.svg {
        let chart = qq_chart(&format!("q-q {} fit", doc.method), &[(doc.method, &report)]);
        write_file(svg, &chart.render())?;
    }
    Ok(report)
}

pub fn pdf(args: &PdfArgs) -> CliResult<()> {
    let params = GpdParams::new(args.shape, args.scale).map_err(invalid)?;
    let curve = evaluation::pdf_curve(&params, args.y_max, args.points).map_err(invalid)?;
    write_file(&args.out, &gio::pdf_csv(&curve))
}

fn method_color(m: Method) -> &'static str {
    match m {
        Method::Mom => "#2a9d8f",
        Method::Mle => "#d1495b",
        Method::Gan => "#3d5a80",
    }
}

fn qq_chart(title: &str, reports: &[(Method, &QqReport)]) -> Chart {
    let mut chart = Chart::new(title, "true quantile", "fitted quantile").with_diagonal();
    for (m, r) in reports {
        let pts = r.true_q.iter().copied().zip(r.fitted_q.iter().copied()).collect();
        chart = chart.with_series(Series::new(
            format!("{m} (1-M = {:.4})", r.slope_error),
            method_color(*m),
            Mark::Dots,
            pts,
        ));
    }
    chart
}

pub fn sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult<SweepResult> {
    let mut cfg = CliConfig::load(args.config.as_deref())?;
    if let Some(s) = &args.sizes {
        cfg.sizes = s.clone();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(m) = &args.methods {
        cfg.methods = m.clone();
    }
    if let Some(k) = args.k {
        cfg.qq_points = k;
    }
    cfg.validate()?;
    let truth = GpdParams::new(args.shape, args.scale).map_err(invalid)?;

    let settings = TrialSettings {
        methods: &cfg.methods,
        gan: &cfg.gan,
        qq_points: cfg.qq_points,
    };
    let result = evaluation::run_sweep(&truth, &cfg.sizes, cfg.trials, args.seed, &settings).map_err(runtime)?;

    let dir = &args.out_dir;
    write_file(&dir.join("sweep.csv"), &gio::sweep_csv(&result))?;
    write_file(&dir.join("summary.csv"), &gio::summary_csv(&result))?;
    for row in &result.rows {
        let o = &row.outcome;
        if let Some(qq) = &o.qq {
            let name = format!("n{}_{}_t{}.csv", row.size, o.method, row.trial);
            write_file(&dir.join("qq").join(name), &gio::qq_csv(qq))?;
        }
        if let Some(report) = &o.train_report {
            let name = format!("n{}_t{}.csv", row.size, row.trial);
            write_file(&dir.join("losses").join(name), &gio::loss_history_csv(report))?;
        }
    }
    write_density_tables(&result, &truth, dir, args.svg)?;

    stdout
        .write_all(gio::summary_table(&result).as_bytes())
        .map_err(|e| runtime(e.into()))?;

    if result.rows.iter().all(|r| r.outcome.failed()) {
        return Err(runtime(gpdgan::Error::Contract("every estimator failed in every trial".into())));
    }
    Ok(result)
}

/// Density curves of trial 0 per size and method, against the truth.
fn write_density_tables(result: &SweepResult, truth: &GpdParams, dir: &Path, svg: bool) -> CliResult<()> {
    let y_max = truth.quantile(0.99).map_err(runtime)?;
    let truth_curve = evaluation::pdf_curve(truth, y_max, 200).map_err(runtime)?;
    write_file(&dir.join("pdf").join("truth.csv"), &gio::pdf_csv(&truth_curve))?;

    let mut sizes: Vec<usize> = result.rows.iter().map(|r| r.size).collect();
    sizes.dedup();
    for size in sizes {
        let first: Vec<_> = result
            .rows
            .iter()
            .filter(|r| r.size == size && r.trial == 0)
            .collect();
        let mut pdf_chart = Chart::new(format!("density, n = {size}"), "y", "density").with_series(Series::new(
            "truth",
            "#222",
            Mark::Line,
            truth_curve.clone(),
        ));
        let mut qq: Vec<(Method, &QqReport)> = Vec::new();
        for row in &first {
            let (Some(fit), Some(report)) = (&row.outcome.fit, &row.outcome.qq) else {
                continue;
            };
            // estimated bounded supports can end before y_max
            let top = fit.params.upper_bound().map_or(y_max, |ub| ub.min(y_max));
            let curve = evaluation::pdf_curve(&fit.params, top, 200).map_err(runtime)?;
            let name = format!("n{size}_{}.csv", row.outcome.method);
            write_file(&dir.join("pdf").join(name), &gio::pdf_csv(&curve))?;
            pdf_chart = pdf_chart.with_series(Series::new(
                row.outcome.method.as_str(),
                method_color(row.outcome.method),
                Mark::Line,
                curve,
            ));
            qq.push((row.outcome.method, report));
        }
        if svg {
            write_file(&dir.join(format!("pdf_n{size}.svg")), &pdf_chart.render())?;
            let chart = qq_chart(&format!("q-q, n = {size}"), &qq);
            write_file(&dir.join(format!("qq_n{size}.svg")), &chart.render())?;
        }
    }
    Ok(())
}
