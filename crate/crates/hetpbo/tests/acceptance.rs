//! End-to-end acceptance checks. Each criterion prints one `PASS` or `FAIL`
//! line; the process exits non-zero when any of them fails. A positional
//! argument restricts the run to criteria whose name contains it.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use hetpbo::config::{BandwidthSetting, ExperimentConfig, FamilyName, Seeds};
use hetpbo::suite::{run_suite, Summary};
use hetpbo_core::acquisition::AcqKind;
use hetpbo_core::benchmarks::{BenchmarkFunction, BenchmarkSpec, SimulatedHuman};
use hetpbo_core::inference::{build_joint, hb_predict, GibbsSettings, PredictiveNoise, TruncatedMvnGibbs};
use hetpbo_core::kde::AnchorModel;
use hetpbo_core::math::sampling::{halton, std_normal, stream, unit_open};
use hetpbo_core::math::{symmetric_eigenvalues, Matrix, RbfKernelParams, SquaredExponential};
use hetpbo_core::oracle::{DensityFamily, TrueUncertaintyOracle};
use hetpbo_core::preference::{DuelDataset, DuelRecord, PreferenceProblem};
use hetpbo_core::rates::{default_probes, rate_check, BandwidthRule};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (&'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    ("likelihood-derivatives", likelihood_derivatives),
    ("homoscedastic-reduction", homoscedastic_reduction),
    ("generative-consistency", generative_consistency),
    ("gibbs-and-hb-predictive", gibbs_and_hb_predictive),
    ("noise-estimator-rate", noise_estimator_rate),
    ("sine1d-headline", sine1d_headline),
    ("branin-hartmann-ordering", branin_hartmann_ordering),
    ("hartmann-ablations", hartmann_ablations),
    ("determinism", determinism),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (name, _) in CRITERIA {
            println!("{name}: test");
        }
        return;
    }
    let filter = args.iter().find(|a| !a.starts_with('-')).cloned();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in CRITERIA {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name} ({secs:.1}s): {}", result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn kernel(lengthscale: f64) -> SquaredExponential {
    SquaredExponential::new(RbfKernelParams::new(lengthscale, 1.0).unwrap())
}

fn point(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| unit_open(r)).collect()
}

fn dataset(r: &mut ChaCha8Rng, d: usize, m: usize) -> DuelDataset {
    DuelDataset::from_duels((0..m).map(|_| DuelRecord::new(point(r, d), point(r, d)).unwrap()).collect()).unwrap()
}

fn phi(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Gauss-Jordan inverse with partial pivoting.
fn inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| (i == j) as u8 as f64));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|x, y| m[*x][c].abs().total_cmp(&m[*y][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..n {
            let f = m[r][c];
            if r != c && f != 0.0 {
                for k in 0..2 * n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| m[i][n + j])
}

fn condition(a: &Matrix) -> f64 {
    let ev = symmetric_eigenvalues(a);
    ev.iter().cloned().fold(f64::MIN, f64::max) / ev.iter().cloned().fold(f64::MAX, f64::min)
}

fn likelihood_derivatives() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = stream(seed, 0);
        let d = 1 + (seed % 3) as usize;
        let m = 1 + (seed % 10) as usize;
        let ds = dataset(&mut r, d, m);
        let anchors = (0..6).map(|_| point(&mut r, d)).collect();
        let noise = AnchorModel::new(anchors, 0.2 + 0.3 * unit_open(&mut r), 0.05 + unit_open(&mut r)).unwrap();
        // keep the prior well conditioned so central differences stay accurate
        let pts = ds.stacked();
        let mut l = 0.05 + 0.3 * unit_open(&mut r);
        while condition(&kernel(l).gram(&pts)) > 1e6 {
            l *= 0.7;
        }
        let p = PreferenceProblem::new(&ds, &kernel(l), &noise).unwrap();
        let f: Vec<f64> = (0..2 * m).map(|_| std_normal(&mut r)).collect();
        let (g, h) = p.grad_and_hessian(&f).unwrap();
        let n = f.len();
        let step = 1e-4;
        let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / b.abs().max(1e-3 * scale).max(1.0);
        let g_scale = g.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for i in 0..n {
            let (mut fp, mut fm) = (f.clone(), f.clone());
            fp[i] += step;
            fm[i] -= step;
            let fd = (p.neg_log_posterior(&fp).unwrap() - p.neg_log_posterior(&fm).unwrap()) / (2.0 * step);
            worst = worst.max(rel(g[i], fd, g_scale));
            let gp = p.grad_and_hessian(&fp).unwrap().0;
            let gm = p.grad_and_hessian(&fm).unwrap().0;
            let h_scale = (0..n).fold(0.0f64, |s, j| s.max(h[(i, j)].abs()));
            for j in 0..n {
                worst = worst.max(rel(h[(j, i)], (gp[j] - gm[j]) / (2.0 * step), h_scale));
            }
        }
    }
    outcome(worst < 1e-5, format!("100 instances, worst relative error {worst:.2e} (limit 1e-5)"))
}

fn homoscedastic_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = stream(seed, 1);
        let d = 1 + (seed % 3) as usize;
        let m = 1 + (seed % 10) as usize;
        let a = 0.05 + unit_open(&mut r);
        let half: Vec<f64> = (0..d).map(|_| 0.6 + unit_open(&mut r)).collect();
        // uniform box of half-widths `half` centered in the unit cube covers every point
        let oracle = TrueUncertaintyOracle::new(DensityFamily::Uniform, vec![0.5; d], half.clone(), a).unwrap();
        let c: f64 = half.iter().map(|w| 1.0 / (2.0 * w)).product();
        let sigma2 = a * (-c).exp();
        let ds = dataset(&mut r, d, m);
        let p = PreferenceProblem::new(&ds, &kernel(0.3), &oracle).unwrap();
        let f: Vec<f64> = (0..2 * m).map(|_| std_normal(&mut r)).collect();
        for k in 0..m {
            let homo = (f[k] - f[m + k]) / (2.0 * sigma2).sqrt();
            worst = worst.max((p.duel_z(k, &f) - homo).abs() / homo.abs().max(1.0));
        }
    }
    outcome(worst <= 1e-12, format!("20 instances, worst z deviation {worst:.2e} (limit 1e-12)"))
}

fn generative_consistency() -> Outcome {
    let spec = BenchmarkSpec::sine1d();
    let density = Normal::new(0.25, 0.125).unwrap();
    let sigma2 = |x: f64| 0.1 * (-statrs::distribution::Continuous::pdf(&density, x)).exp();
    let trials = 100_000;
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let x = 0.05 * i as f64;
        let y = x + 0.02 + 0.01 * (i % 4) as f64;
        let p = phi(((2.0 * std::f64::consts::PI * x).sin() - (2.0 * std::f64::consts::PI * y).sin())
            / (sigma2(x) + sigma2(y)).sqrt());
        let mut human = SimulatedHuman::new(spec.clone(), stream(i, 3));
        let wins = (0..trials).filter(|_| human.prefers(&[x], &[y])).count();
        worst = worst.max((wins as f64 / trials as f64 - p).abs());
    }
    outcome(worst < 0.01, format!("20 pairs x 1e5 duels, worst |freq - probit| {worst:.4} (limit 0.01)"))
}

fn gibbs_and_hb_predictive() -> Outcome {
    let vars = [0.5, 1.0, 2.0, 0.1, 4.0];
    let mut chain = TruncatedMvnGibbs::new(&Matrix::diagonal(&vars)).unwrap();
    let n = 10_000;
    let samples = chain.run(GibbsSettings { burn_in: 50, thinning: 1 }, n, &mut stream(42, 0));
    let critical = 1.628 / (n as f64).sqrt();
    let mut ks_max: f64 = 0.0;
    for (j, v) in vars.iter().enumerate() {
        let sd = v.sqrt();
        let mut xs: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = 2.0 * phi(x / sd);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        ks_max = ks_max.max(d);
    }

    let mut hb_err: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = stream(seed, 2);
        let d = 1 + (seed % 3) as usize;
        let m = 2 + (seed % 6) as usize;
        let ds = dataset(&mut r, d, m);
        let tests: Vec<Vec<f64>> = (0..4).map(|_| point(&mut r, d)).collect();
        let anchors = (0..5).map(|_| point(&mut r, d)).collect();
        let noise = AnchorModel::new(anchors, 0.3, 0.3).unwrap();
        let j = build_joint(&tests, &ds, &kernel(0.25), &noise).unwrap();
        let v: Vec<f64> = (0..m).map(|_| -std_normal(&mut r).abs()).collect();
        let inv = inverse(&j.duels);
        for mode in [PredictiveNoise::Latent, PredictiveNoise::Observed] {
            let p = hb_predict(&j, &v, mode).unwrap();
            for a in 0..4 {
                let w: Vec<f64> = (0..m).map(|k| (0..m).map(|l| j.cross[(a, l)] * inv[(l, k)]).sum()).collect();
                let mean: f64 = w.iter().zip(&v).map(|(w, v)| w * v).sum();
                hb_err = hb_err.max((p.mean[a] - mean).abs());
                for b in 0..4 {
                    let mut c = j.test[(a, b)] - (0..m).map(|k| w[k] * j.cross[(b, k)]).sum::<f64>();
                    if mode == PredictiveNoise::Observed && a == b {
                        c += j.test_noise[a];
                    }
                    hb_err = hb_err.max((p.covariance[(a, b)] - c).abs());
                }
            }
        }
    }
    outcome(
        ks_max < critical && hb_err < 1e-8,
        format!("KS max D {ks_max:.4} (critical {critical:.4}), HB predictive max error {hb_err:.2e} (limit 1e-8)"),
    )
}

fn noise_estimator_rate() -> Outcome {
    let oracle = TrueUncertaintyOracle::gaussian(vec![0.0], vec![1.0], 1.0).unwrap();
    let probes = default_probes(&oracle, 32);
    let grid = [50, 100, 200, 400, 800, 1600];
    let report = rate_check(&oracle, &grid, BandwidthRule::Rate { alpha: 1.0, beta: 2.0 }, 50, &probes, 0).unwrap();
    let mses: Vec<String> = report.points.iter().map(|p| format!("{:.2e}", p.mse)).collect();
    outcome(
        (-1.2..=-0.5).contains(&report.slope),
        format!("log-MSE slope {:.3} in [-1.2, -0.5], mse {}", report.slope, mses.join(" ")),
    )
}

fn config(function: BenchmarkFunction, iterations: usize, seeds: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_benchmark(function);
    cfg.experiment.iterations = iterations;
    cfg.experiment.seeds = Seeds::Count(seeds);
    cfg
}

fn sign(summary: &Summary, candidate: AcqKind, metric: &str) -> (usize, usize, f64) {
    let t = summary.comparison(candidate, metric).unwrap_or_else(|| panic!("missing {metric}")).test;
    (t.wins, t.losses, t.p_value)
}

fn sine1d_headline() -> Outcome {
    let cfg = config(BenchmarkFunction::Sine1d, 30, 30);
    let res = run_suite(&cfg, None).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in AcqKind::ALL {
        let k = res.summary.kind(kind).unwrap();
        let reached = k.seeds.iter().filter(|s| s.complete && s.best_simple_regret < 0.05).count();
        let frac = reached as f64 / 30.0;
        pass &= frac >= 0.8;
        parts.push(format!("{} {reached}/30", kind.name()));
    }
    for (cand, base) in [(AcqKind::Anpei, "ei"), (AcqKind::Rahbo, "ucb")] {
        let (w, l, p) = sign(&res.summary, cand, "final_cum_regret_rho3fmax");
        pass &= p < 0.05;
        parts.push(format!("{} vs {base} {w}-{l} p={p:.2e}", cand.name()));
    }
    outcome(pass, format!("simple regret < 0.05 reached: {}", parts.join(", ")))
}

/// `f_max − min f` over the corners and a Halton cover of the domain.
fn value_range(spec: &BenchmarkSpec) -> f64 {
    let d = spec.dim();
    let corners = (0..1u64 << d).map(|b| (0..d).map(|i| ((b >> i) & 1) as f64).collect::<Vec<_>>());
    let cover = (1..=20_000u64).map(|i| halton(i, d));
    let min = corners
        .chain(cover)
        .map(|u| spec.latent(&spec.domain.from_unit(&u)))
        .fold(f64::INFINITY, f64::min);
    spec.f_max - min
}

fn ordering(function: BenchmarkFunction, seeds: u64) -> (bool, String) {
    let cfg = config(function, 40, seeds);
    let res = run_suite(&cfg, None).unwrap();
    let range = value_range(&cfg.spec().unwrap());
    let mut pass = true;
    let mut parts = Vec::new();
    for (cand, base) in [(AcqKind::Anpei, AcqKind::Ei), (AcqKind::Rahbo, AcqKind::Ucb)] {
        let (w, l, p) = sign(&res.summary, cand, "mean_sigma2_true");
        let best = |k| res.summary.kind(k).unwrap().best_f.mean;
        let gap = best(base) - best(cand);
        pass &= p < 0.05 && gap <= 0.1 * range;
        parts.push(format!(
            "{} vs {} sigma2 {w}-{l} p={p:.2e} gap {:.3}% of range",
            cand.name(),
            base.name(),
            100.0 * gap / range
        ));
    }
    let complete: usize = res.summary.kinds.iter().map(|k| k.complete).sum();
    pass &= complete == 4 * seeds as usize;
    (pass, format!("{} [{}]", function.name(), parts.join("; ")))
}

fn branin_hartmann_ordering() -> Outcome {
    let (a, da) = ordering(BenchmarkFunction::Branin2d, 30);
    let (b, db) = ordering(BenchmarkFunction::Hartmann4d, 30);
    outcome(a && b, format!("T=40, 30 seeds: {da} {db}"))
}

fn hartmann_ablations() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = config(BenchmarkFunction::Hartmann4d, 40, 10);
    let mut student = base.clone();
    student.benchmark.oracle_family = FamilyName::StudentT;
    student.benchmark.oracle_dof = 5.0;
    let mut evidence = base.clone();
    evidence.inference.bandwidth = BandwidthSetting::Named("evidence".into());

    let mut pass = true;
    let mut parts = Vec::new();
    let mut headers = BTreeMap::new();
    for (label, cfg) in [("loo", &base), ("student_t", &student), ("evidence", &evidence)] {
        let out = dir.path().join(label);
        let res = run_suite(cfg, Some(&out)).unwrap();
        let complete: usize = res.summary.kinds.iter().map(|k| k.complete).sum();
        pass &= complete == 40;
        for kind in AcqKind::ALL {
            headers.insert((label, kind.name()), aggregate_header(&out.join(kind.name()).join("aggregate.csv")));
        }
        let mut cells = Vec::new();
        for (cand, baseline) in [(AcqKind::Anpei, AcqKind::Ei), (AcqKind::Rahbo, AcqKind::Ucb)] {
            let m = |k| res.summary.kind(k).unwrap().mean_sigma2_true.mean;
            let (w, l, p) = sign(&res.summary, cand, "mean_sigma2_true");
            pass &= m(cand) < m(baseline);
            cells.push(format!(
                "{} {:.3} < {} {:.3} (sign {w}-{l} p={p:.3})",
                cand.name(),
                m(cand),
                baseline.name(),
                m(baseline)
            ));
        }
        parts.push(format!("{label} {complete}/40 complete: {}", cells.join(", ")));
    }
    let first = headers.values().next().unwrap().clone();
    let comparable = headers.values().all(|h| *h == first);
    pass &= comparable;
    outcome(pass, format!("mean sigma2 ordering; {}; aggregate tables comparable: {comparable}", parts.join("; ")))
}

fn aggregate_header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn determinism() -> Outcome {
    let mut mismatched = Vec::new();
    let mut files = 0;
    for function in [BenchmarkFunction::Sine1d, BenchmarkFunction::Branin2d, BenchmarkFunction::Hartmann4d] {
        let cfg = config(function, 12, 3);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_suite(&cfg, Some(a.path())).unwrap();
        run_suite(&cfg, Some(b.path())).unwrap();
        for kind in AcqKind::ALL {
            for seed in 1..=3 {
                let f = format!("{}/trace_seed{seed}.csv", kind.name());
                files += 1;
                if std::fs::read(a.path().join(&f)).unwrap() != std::fs::read(b.path().join(&f)).unwrap() {
                    mismatched.push(format!("{}:{f}", function.name()));
                }
            }
        }
    }
    outcome(mismatched.is_empty(), format!("{files} trace files compared, mismatches: {mismatched:?}"))
}
