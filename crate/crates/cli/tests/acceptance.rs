//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use neurotrack::analysis::{fit_linear, RateKind};
use neurotrack::decoder::{default_lambda_grid, pearson, train};
use neurotrack::infotheory::{bias_estimate, transfer_entropy, EmbedSpec};
use neurotrack::signals::{normalize, LagWindow, MultichannelRecording, TimeSeries};
use neurotrack::special::student_t_cdf;
use neurotrack::synth::{analytic_te, gauss, simulate, substream, VarModel};
use neurotrack::Condition;
use neurotrack_cli::output::TIMESTAMP_KEY;
use neurotrack_cli::pipeline::{compute_rates, run_in_memory, simulate_dataset, train_decoders};
use neurotrack_cli::RunConfig;
use rand_chacha::ChaCha20Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn white(n: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    (0..n).map(|_| gauss(rng)).collect()
}

fn series(label: &str, v: Vec<f64>) -> TimeSeries {
    TimeSeries::new(label, 64.0, v).unwrap()
}

fn random_stable_model(rng: &mut ChaCha20Rng) -> VarModel {
    let d = 3;
    let raw = DMatrix::from_fn(d, d, |_, _| gauss(rng));
    let radius = raw.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let target = 0.3 + 0.65 * rand::Rng::random::<f64>(rng);
    let a = raw * (target / radius);
    let b = DMatrix::from_fn(d, d, |_, _| gauss(rng));
    let q = &b * b.transpose() + DMatrix::identity(d, d) * 0.5;
    VarModel::unlabeled(a, q).unwrap()
}

fn te_oracle_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = substream(1, 1);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..10 {
        let m = random_stable_model(&mut rng);
        assert!(m.spectral_radius() <= 0.95 + 1e-12);
        let e = EmbedSpec::new(1 + i % 4, 1 + (i / 2) % 4, 1 + i % 2).unwrap();
        let r = simulate(&m, 100_000, 100 + i as u64).unwrap();
        let (src, tgt) = (i % 3, (i + 1) % 3);
        let est = transfer_entropy(&r.channels()[src], &r.channels()[tgt], &e).unwrap();
        let exact = analytic_te(&m, src, tgt, &e).unwrap();
        let tol = 0.005f64.max(3.0 * bias_estimate(e.source_history_len, 1, 100_000));
        let err = (est - exact).abs();
        worst = worst.max(err / tol);
        if err >= tol {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 60.0,
        format!("{failures} of 10 models outside tolerance, worst error/tolerance {worst:.3}, {secs:.1} s"),
    )
}

fn null_calibration() -> Outcome {
    let e = EmbedSpec::new(4, 4, 1).unwrap();
    let below = (0..100u64)
        .filter(|&seed| {
            let mut rng = substream(seed, 2);
            let x = series("x", white(100_000, &mut rng));
            let z = series("z", white(100_000, &mut rng));
            transfer_entropy(&x, &z, &e).unwrap() <= 0.003
        })
        .count();
    outcome(below >= 95, format!("{below} of 100 null pairs at or below 0.003 bits"))
}

fn affine_invariance() -> Outcome {
    let m = VarModel::unlabeled(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.9]), DMatrix::identity(2, 2)).unwrap();
    let r = simulate(&m, 20_000, 3).unwrap();
    let (x, z) = (&r.channels()[0], &r.channels()[1]);
    let e = EmbedSpec::default();
    let base = transfer_entropy(x, z, &e).unwrap();
    let mut rng = substream(3, 3);
    let mut coef = || {
        let sign = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 };
        sign * 10f64.powf(4.0 * rand::Rng::random::<f64>(&mut rng) - 2.0)
    };
    let map = |s: &TimeSeries, a: f64, b: f64| series(s.label(), s.samples().iter().map(|v| a * v + b).collect());
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (a, b, c, d) = (coef(), coef(), coef(), coef());
        let te = transfer_entropy(&map(x, a, b), &map(z, c, d), &e).unwrap();
        worst = worst.max((te - base).abs());
    }
    outcome(worst < 1e-9, format!("max deviation {worst:.2e} bits over 20 maps"))
}

fn mse_identity() -> Outcome {
    let mut rng = substream(4, 4);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = 50 + 37 * i;
        let mix = rand::Rng::random::<f64>(&mut rng) * 2.0 - 1.0;
        let a0 = white(n, &mut rng);
        let b0: Vec<f64> = a0.iter().map(|v| mix * v + gauss(&mut rng)).collect();
        let a = normalize(&series("a", a0)).unwrap();
        let b = normalize(&series("b", b0)).unwrap();
        let half_mse = 0.5 * a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64;
        let rho = pearson(&a, &b).unwrap();
        worst = worst.max((half_mse - (1.0 - rho)).abs());
    }
    outcome(worst < 1e-12, format!("max |MSE/2 - (1 - rho)| = {worst:.2e} over 100 pairs"))
}

fn decoder_recovery() -> Outcome {
    let (n, n_ch) = (10_000usize, 3usize);
    let w = LagWindow::new(0, 16).unwrap();
    let mut rng = substream(5, 5);
    let raw = DMatrix::from_fn(w.n_lags(), n_ch, |_, _| gauss(&mut rng));
    // unit signal variance, noise variance 1/SNR
    let g = &raw / raw.norm();
    let x: Vec<Vec<f64>> = (0..n_ch).map(|_| white(n, &mut rng)).collect();
    let s: Vec<f64> = (0..n)
        .map(|t| {
            let mut v = (0.1f64).sqrt() * gauss(&mut rng);
            for (k, tau) in w.lags().enumerate() {
                if let Some(row) = x.first().and_then(|c| c.get(t + tau as usize)).map(|_| t + tau as usize) {
                    for c in 0..n_ch {
                        v += g[(k, c)] * x[c][row];
                    }
                }
            }
            v
        })
        .collect();
    let channels = x.into_iter().enumerate().map(|(c, v)| series(&format!("C{c}"), v)).collect();
    let r = MultichannelRecording::new(channels, "S01", "T001", Condition::Attended).unwrap();
    let s = series("s", s);
    let d = train(&r, &s, w, 0.0).unwrap();
    let err = (d.weights() - &g).abs().max();
    let norms: Vec<f64> =
        default_lambda_grid().iter().map(|&l| train(&r, &s, w, l).unwrap().weights().norm()).collect();
    let monotone = norms.windows(2).all(|p| p[0] >= p[1]);
    outcome(
        err < 1e-2 && monotone,
        format!("max weight error {err:.4}, ridge norms non-increasing over 13 lambdas: {monotone}"),
    )
}

fn small_config(seed: u64, subjects: usize, trials: usize, samples: usize) -> RunConfig {
    let mut cfg = RunConfig { seed, ..Default::default() };
    cfg.scenario.n_subjects = subjects;
    cfg.scenario.n_trials = trials;
    cfg.scenario.n_samples = samples;
    cfg
}

fn min_property() -> Outcome {
    let mut cfg = small_config(6, 2, 100, 1000);
    cfg.embed = EmbedSpec::new(4, 4, 1).unwrap();
    let conditions = [Condition::Attended, Condition::Distractor];
    let ds = simulate_dataset(&cfg).unwrap();
    let decoders = train_decoders(&cfg, &ds, &conditions).unwrap();
    let rates = compute_rates(&cfg, &ds, &decoders, &conditions).unwrap();
    let violations = rates
        .iter()
        .filter(|r| {
            let b = &r.bundle;
            !(b.r_min <= b.r_s_to_shat && b.r_min <= b.r_e_to_shat && b.r_min <= b.r_s_to_e)
        })
        .count();
    outcome(
        violations == 0 && ds.trials.len() == 200,
        format!("{violations} violations over {} bundles from {} trials", rates.len(), ds.trials.len()),
    )
}

/// Adaptive Simpson quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    step(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Student-t CDF by quadrature. Substituting `x = sqrt(nu) tan(theta)` turns
/// the density into `cos(theta)^(nu - 1)` on a finite interval, so no gamma
/// function is needed.
fn t_cdf_quadrature(t: f64, nu: f64) -> f64 {
    let f = move |th: f64| th.cos().max(0.0).powf(nu - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let upper = (t / nu.sqrt()).atan();
    simpson(&f, -half, upper, 1e-13) / simpson(&f, -half, half, 1e-13)
}

fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter().enumerate().map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs())).fold(0.0, f64::max)
}

fn regression_machinery() -> Outcome {
    let spots = [(0.0, 5.0), (2.0, 10.0), (-1.5, 3.0), (0.7, 1.0), (3.2, 30.0), (-4.0, 2.0), (1.1, 7.5)];
    let spot_err =
        spots.iter().map(|&(t, nu)| (student_t_cdf(t, nu) - t_cdf_quadrature(t, nu)).abs()).fold(0.0, f64::max);
    let anchors = student_t_cdf(0.0, 5.0) == 0.5 && (student_t_cdf(2.0, 10.0) - 0.96331).abs() < 1e-5;

    let p_values: Vec<f64> = (0..1000u64)
        .map(|seed| {
            let mut rng = substream(seed, 7);
            let xs = white(100, &mut rng);
            let ys = white(100, &mut rng);
            fit_linear(&xs, &ys).unwrap().p_value
        })
        .collect();
    let ks = ks_uniform(p_values);

    let xs: Vec<f64> = (0..10).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
    let line_p = fit_linear(&xs, &ys).unwrap().p_value;
    outcome(
        spot_err < 1e-5 && anchors && ks < 0.05 && line_p < 1e-12,
        format!("t-CDF max error {spot_err:.1e}, anchors {anchors}, KS {ks:.4}, exact-line p {line_p:.1e}"),
    )
}

fn attended_trend() -> Outcome {
    let mut significant = 0;
    let mut slowest = Duration::ZERO;
    let start = Instant::now();
    let mut slopes = Vec::new();
    for seed in 1..=20 {
        let t = Instant::now();
        let cfg = RunConfig { seed, ..Default::default() };
        let cells = run_in_memory(&cfg, &[Condition::Attended], &[RateKind::SToShat]).unwrap();
        slowest = slowest.max(t.elapsed());
        let fit = cells[0].analysis.as_ref().map(|a| a.fit);
        if let Ok(f) = fit {
            slopes.push(f.slope);
            if f.slope < 0.0 && f.p_value < 0.05 {
                significant += 1;
            }
        }
    }
    let max_slope = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        significant >= 18 && slowest < Duration::from_secs(600),
        format!(
            "{significant} of 20 seeds negative with p < 0.05 (largest slope {max_slope:.1} dB/bit); slowest seed {:.1} s, all seeds {:.1} s",
            slowest.as_secs_f64(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut files = Vec::new();
    collect(a, a, &mut files);
    let mut other = Vec::new();
    collect(b, b, &mut other);
    if files != other {
        return Err("file sets differ".into());
    }
    for rel in &files {
        let read = |root: &Path| std::fs::read_to_string(root.join(rel)).unwrap();
        let strip = |s: String| s.lines().filter(|l| !l.contains(TIMESTAMP_KEY)).collect::<Vec<_>>().join("\n");
        let (x, y) = (read(a), read(b));
        let stamps = x.lines().filter(|l| l.contains(TIMESTAMP_KEY)).count();
        if stamps > 1 {
            return Err(format!("{} has {stamps} timestamp lines", rel.display()));
        }
        if strip(x) != strip(y) {
            return Err(format!("{} differs", rel.display()));
        }
    }
    Ok(files.len())
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_path_buf());
        }
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(9, 2, 6, 1200);
    cfg.embed = EmbedSpec::new(4, 4, 1).unwrap();
    let cfg_path = tmp.path().join("run.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    for run in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_neurotrack"))
            .arg("all")
            .arg("--config")
            .arg(&cfg_path)
            .arg("--data")
            .arg(tmp.path().join(run).join("data"))
            .arg("--out")
            .arg(tmp.path().join(run).join("out"))
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("run {run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
    }
    match compare_dirs(&tmp.path().join("a"), &tmp.path().join("b")) {
        Ok(n) => outcome(true, format!("{n} files identical apart from timestamp lines")),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("TE oracle agreement", te_oracle_agreement),
        ("null calibration", null_calibration),
        ("TE affine invariance", affine_invariance),
        ("half-MSE correlation identity", mse_identity),
        ("decoder recovery", decoder_recovery),
        ("rate-bundle min property", min_property),
        ("regression machinery", regression_machinery),
        ("attended distortion-rate trend", attended_trend),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
