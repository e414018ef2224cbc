//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gpdgan::evaluation::qq_report;
use gpdgan::gan::{train, GanEstimator};
use gpdgan::gpd::GpdParams;
use gpdgan::nn::{bce_gradient, bce_loss};
use gpdgan::{mle_fit, mom_fit, GanConfig, RngStream};
use tempfile::TempDir;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn gpdgan(args: &[&str]) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_gpdgan"))
        .args(args)
        .output()
        .expect("binary runs");
    if !out.status.success() {
        eprintln!("{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    (out.status.success(), out.stdout)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

const SWEEP_SIZES: [usize; 4] = [2000, 50, 20, 10];

fn sweep_ordering() -> Verdict {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep");
    let started = Instant::now();
    let (ok, _) = gpdgan(&[
        "sweep", "--sizes", "2000,50,20,10", "--trials", "20", "--shape", "0.3", "--scale", "1.0", "--out-dir",
        s(&out),
    ]);
    let elapsed = started.elapsed();
    if !ok {
        return Verdict::new(false, "sweep command failed");
    }
    // size,method,trials,failures,failure_rate,mean_abs_slope_error,...
    let rows = csv_rows(&out.join("summary.csv"));
    let mean = |size: usize, method: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == size.to_string() && r[1] == method)
            .and_then(|r| r[5].parse().ok())
            .unwrap_or(f64::INFINITY)
    };
    let mut pass = elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for n in SWEEP_SIZES {
        let (g, m) = (mean(n, "gan"), mean(n, "mle"));
        let ok = if n == 2000 { g < 0.05 && m < 0.05 } else { g < m };
        pass &= ok;
        parts.push(format!("n={n} gan {g:.4} mle {m:.4} mom {:.4}{}", mean(n, "mom"), if ok { "" } else { " (x)" }));
    }
    Verdict::new(pass, format!("{}; {:.0}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn loss_convergence() -> Verdict {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    let losses = dir.path().join("losses.csv");
    let started = Instant::now();
    let ok = gpdgan(&["gen-data", "--shape", "0.3", "--scale", "1.0", "--n", "2000", "--seed", "1", "--out", s(&data)]).0
        && gpdgan(&[
            "fit", "--method", "gan", "--input", s(&data), "--out", s(&dir.path().join("fit.json")), "--loss-out",
            s(&losses),
        ])
        .0;
    let elapsed = started.elapsed();
    if !ok {
        return Verdict::new(false, "gan fit failed");
    }
    let rows = csv_rows(&losses);
    let parsed: Vec<[f64; 3]> = rows
        .iter()
        .map(|r| [r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap()])
        .collect();
    let finite = parsed.iter().all(|l| l.iter().all(|v| v.is_finite()));
    let tail = &parsed[parsed.len() - 20 * 50..];
    let g_tail = tail.iter().map(|l| l[0]).sum::<f64>() / tail.len() as f64;
    let pass = finite && (0.3..=1.4).contains(&g_tail) && parsed.len() == 200 * 50 && elapsed < Duration::from_secs(60);
    Verdict::new(
        pass,
        format!("{} steps, finite={finite}, final-20-epoch generator loss {g_tail:.4}; {:.1}s", parsed.len(), elapsed.as_secs_f64()),
    )
}

fn ks_statistic(params: &GpdParams, n: usize, seed: u64) -> f64 {
    let mut v = params.sample(n, &mut RngStream::new(seed)).unwrap().values().to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    v.iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = params.cdf(y).unwrap();
            (f - i as f64 / nf).abs().max((i as f64 + 1.0) / nf - f)
        })
        .fold(0.0, f64::max)
}

fn sampler_correctness() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (shape, scale) in [(-0.4, 1.0), (0.0, 1.0), (0.3, 2.0)] {
        let d = ks_statistic(&GpdParams::new(shape, scale).unwrap(), 100_000, 2024);
        pass &= d < 0.02;
        parts.push(format!("({shape},{scale}) D={d:.4}"));
    }
    Verdict::new(pass, parts.join(", "))
}

fn estimator_consistency() -> Verdict {
    let truth = GpdParams::new(0.2, 1.0).unwrap();
    let seeds = 20u64;
    let mut sums = [[0.0; 2]; 3];
    for seed in 0..seeds {
        let data = truth.sample(10_000, &mut RngStream::new(seed)).unwrap();
        let fits = [
            mle_fit(&data).unwrap().params,
            mom_fit(&data).unwrap().params,
            train(
                &data,
                &GanConfig {
                    seed,
                    ..GanConfig::default()
                },
            )
            .unwrap()
            .0
            .params,
        ];
        for (acc, p) in sums.iter_mut().zip(fits) {
            acc[0] += p.shape() / seeds as f64;
            acc[1] += p.scale() / seeds as f64;
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for ((name, tol), [shape, scale]) in [("mle", 0.05), ("mom", 0.05), ("gan", 0.1)].into_iter().zip(sums) {
        pass &= (shape - 0.2).abs() < tol && (scale - 1.0).abs() < tol;
        parts.push(format!("{name} ({shape:.4}, {scale:.4})"));
    }
    Verdict::new(pass, parts.join(", "))
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn gradient_fidelity() -> Verdict {
    const H: f64 = 1e-5;
    let truth = GpdParams::new(0.3, 1.0).unwrap();
    let (mut worst_net, mut worst_e2e): (f64, f64) = (0.0, 0.0);
    for seed in 0..5u64 {
        let data = truth.sample(500, &mut RngStream::new(seed)).unwrap();
        let mut est = GanEstimator::new(&data, &GanConfig { seed, ..GanConfig::default() }).unwrap();
        let mut jitter = RngStream::new(seed + 40);
        for net in [0, 1] {
            let m = if net == 0 { est.generator_mut() } else { est.discriminator_mut() };
            let p: Vec<f64> = m.flat_parameters().iter().map(|w| w + jitter.uniform_range(-0.5, 0.5)).collect();
            m.set_flat_parameters(&p).unwrap();
        }

        // discriminator parameters under its own BCE loss
        let mut disc = est.discriminator().clone();
        let x = [jitter.uniform_range(0.0, 3.0)];
        let target = (seed % 2) as f64;
        let pred = disc.forward(&x).unwrap()[0];
        disc.backward(&[bce_gradient(pred, target)]).unwrap();
        let analytic = disc.flat_gradients();
        let base = disc.flat_parameters();
        for k in 0..base.len() {
            let mut probe = disc.clone();
            let mut q = base.clone();
            q[k] += H;
            probe.set_flat_parameters(&q).unwrap();
            let hi = bce_loss(probe.predict(&x).unwrap()[0], target);
            q[k] -= 2.0 * H;
            probe.set_flat_parameters(&q).unwrap();
            let lo = bce_loss(probe.predict(&x).unwrap()[0], target);
            worst_net = worst_net.max(rel_err(analytic[k], (hi - lo) / (2.0 * H)));
        }

        // generator parameters through the sampled fake and the discriminator
        let mut noise = truth.sample(1000, &mut jitter).unwrap().values().to_vec();
        let features = gpdgan::gan::noise_features(&mut noise, 10);
        let u = jitter.uniform_range(0.05, 0.95);
        let analytic = est.generator_gradient(&features, u).unwrap();
        let base = est.generator().flat_parameters();
        for k in 0..base.len() {
            let mut probe = est.clone();
            let mut q = base.clone();
            q[k] += H;
            probe.generator_mut().set_flat_parameters(&q).unwrap();
            let hi = probe.generator_objective(&features, u).unwrap();
            q[k] -= 2.0 * H;
            probe.generator_mut().set_flat_parameters(&q).unwrap();
            let lo = probe.generator_objective(&features, u).unwrap();
            worst_e2e = worst_e2e.max(rel_err(analytic[k], (hi - lo) / (2.0 * H)));
        }
    }
    Verdict::new(
        worst_net < 1e-4 && worst_e2e < 1e-3,
        format!("worst network rel err {worst_net:.2e}, worst end-to-end rel err {worst_e2e:.2e}"),
    )
}

fn initialization_contract() -> Verdict {
    let truth = GpdParams::new(0.3, 1.0).unwrap();
    let data = truth.sample(2000, &mut RngStream::new(6)).unwrap();
    let mom = mom_fit(&data).unwrap().params;
    let zero_epochs = train(&data, &GanConfig { epochs: 0, ..GanConfig::default() }).unwrap().0.params;
    let frozen = train(
        &data,
        &GanConfig {
            lr_generator: 0.0,
            lr_discriminator: 0.0,
            ..GanConfig::default()
        },
    )
    .unwrap()
    .0
    .params;
    Verdict::new(
        zero_epochs == mom && frozen == mom,
        format!("mom {mom:?}, epochs=0 {zero_epochs:?}, zero rates {frozen:?}"),
    )
}

fn metric_identities() -> Verdict {
    let mut max_self: f64 = 0.0;
    let mut max_round: f64 = 0.0;
    for (shape, scale) in [(-0.9, 0.5), (-0.4, 1.0), (0.0, 1.0), (1e-12, 2.0), (0.3, 2.0), (0.95, 3.0)] {
        let p = GpdParams::new(shape, scale).unwrap();
        for k in [2, 10, 100, 1000] {
            max_self = max_self.max(qq_report(&p, &p, k).unwrap().slope_error.abs());
        }
        for i in 1..1000 {
            let prob = i as f64 / 1000.0;
            max_round = max_round.max((p.cdf(p.quantile(prob).unwrap()).unwrap() - prob).abs());
        }
    }
    let doubled = qq_report(&GpdParams::new(0.0, 2.0).unwrap(), &GpdParams::new(0.0, 1.0).unwrap(), 100)
        .unwrap()
        .slope_error;
    Verdict::new(
        max_self == 0.0 && (doubled + 1.0).abs() < 1e-12 && max_round < 1e-10,
        format!("self {max_self:e}, doubled-scale {doubled}, round-trip {max_round:.1e}"),
    )
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_every_command(dir: &Path) -> Option<Vec<u8>> {
    let f = |name: &str| dir.join(name);
    let mut stdout = Vec::new();
    let commands: Vec<Vec<String>> = vec![
        vec!["gen-data", "--shape", "0.3", "--scale", "1.0", "--n", "300", "--seed", "7", "--out", s(&f("d.csv"))],
        vec!["fit", "--method", "mom", "--input", s(&f("d.csv")), "--out", s(&f("mom.json"))],
        vec!["fit", "--method", "mle", "--input", s(&f("d.csv")), "--out", s(&f("mle.json"))],
        vec![
            "fit", "--method", "gan", "--input", s(&f("d.csv")), "--seed", "3", "--out", s(&f("gan.json")),
            "--loss-out", s(&f("loss.csv")),
        ],
        vec![
            "evaluate", "--fit", s(&f("gan.json")), "--true-shape", "0.3", "--true-scale", "1.0", "--out",
            s(&f("qq.csv")), "--svg", s(&f("qq.svg")),
        ],
        vec!["pdf", "--shape", "0.3", "--scale", "1.0", "--y-max", "5", "--out", s(&f("pdf.csv"))],
        vec![
            "sweep", "--sizes", "40,10", "--trials", "2", "--seed", "5", "--svg", "--out-dir", s(&f("sweep")),
        ],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(str::to_owned).collect())
    .collect();
    for c in &commands {
        let args: Vec<&str> = c.iter().map(String::as_str).collect();
        let (ok, out) = gpdgan(&args);
        if !ok {
            return None;
        }
        stdout.extend(out);
    }
    Some(stdout)
}

fn determinism() -> Verdict {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    // identical relative layout, so paths echoed into outputs cannot differ
    let (da, db) = (a.path().join("run"), b.path().join("run"));
    fs::create_dir_all(&da).unwrap();
    fs::create_dir_all(&db).unwrap();
    let (Some(oa), Some(ob)) = (run_every_command(&da), run_every_command(&db)) else {
        return Verdict::new(false, "a command failed");
    };
    let (sa, sb) = (snapshot(&da), snapshot(&db));
    let diff: Vec<String> = sa
        .iter()
        .zip(&sb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let pass = oa == ob && sa.len() == sb.len() && diff.is_empty();
    Verdict::new(pass, format!("{} files compared, differing: {diff:?}, stdout equal: {}", sa.len(), oa == ob))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 sweep ordering and n=2000 magnitude", sweep_ordering),
        ("2 loss convergence", loss_convergence),
        ("3 sampler KS", sampler_correctness),
        ("4 estimator consistency", estimator_consistency),
        ("5 gradient fidelity", gradient_fidelity),
        ("6 initialization contract", initialization_contract),
        ("7 metric identities", metric_identities),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
