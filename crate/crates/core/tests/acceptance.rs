//! Acceptance suite: twelve criteria, one PASS/FAIL line each. Runs as its
//! own harness; exits non-zero when any criterion fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracsk::analysis::{
    covariance_comparison, holder_fit_batch, moment_growth, stationarity_check, temporal_asymptotics, Axis,
    CovarianceModel, MomentReport,
};
use fracsk::config::RunConfig;
use fracsk::green::{check_increments, check_l2, nt, nt_bound, SpectralIntegrator};
use fracsk::grid::GridSpec;
use fracsk::kernels::{integrability_by_quadrature, integrability_margin, select_eta, FracParams, SpectralKernel};
use fracsk::mlf::{eval_ml, ml_bounds, MlQuery};
use fracsk::noise::synthesize_replica;
use fracsk::pipeline;
use fracsk::sim::{second_moment_recursion, AdditiveSampler, InitialCondition, MildSolver, SigmaSpec, StepRule};
use fracsk::stats::{collect, BatchPlan};
use fracsk::Verdict;

type Outcome = Result<String, String>;

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xAC00 + tag)
}

fn params(beta: f64, alpha: f64, gamma: f64, lambda: f64, d: usize) -> FracParams<f64> {
    FracParams::new(beta, alpha, gamma, 1.0, lambda, d).unwrap()
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ml_sandwich() -> Outcome {
    let mut r = rng(1);
    let mut bad = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let beta = r.random_range(0.05..0.95);
        let x = 50.0 * (1.0 - r.random::<f64>());
        let q = MlQuery::new(beta, x).unwrap();
        let v = eval_ml(q, 1e-12).map_err(|e| e.to_string())?;
        let (lo, hi) = ml_bounds(q).unwrap();
        let excess = (lo - v).max(v - hi);
        worst = worst.max(excess);
        if v < lo - 1e-10 || v > hi + 1e-10 {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("violations {bad}/1000, worst excess {worst:.3e}"))
}

fn closed_forms() -> Outcome {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/erfcx_200.csv")).unwrap();
    let mut e1: f64 = 0.0;
    let mut e_half: f64 = 0.0;
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let (x, want) = line.split_once(',').unwrap();
        let x: f64 = x.parse().unwrap();
        let want: f64 = want.parse().unwrap();
        let a = eval_ml(MlQuery::new(1.0, x).unwrap(), 1e-11).map_err(|e| e.to_string())?;
        let b = eval_ml(MlQuery::new(0.5, x).unwrap(), 1e-11).map_err(|e| e.to_string())?;
        e1 = e1.max((a - (-x).exp()).abs());
        e_half = e_half.max((b - want).abs());
        rows += 1;
    }
    verdict(
        rows == 200 && e1 <= 1e-10 && e_half <= 1e-8,
        format!("{rows} points, max |E_1 - exp| {e1:.2e}, max |E_1/2 - erfcx| {e_half:.2e}"),
    )
}

fn green_l2_bound() -> Outcome {
    let mut r = rng(3);
    let mut bad = 0;
    let mut n = 0;
    let mut min_margin = f64::INFINITY;
    while n < 50 {
        let d = r.random_range(1..=3usize);
        let p = params(r.random_range(0.05..=1.0), r.random_range(0.5..3.0), r.random_range(0.0..1.0), 1.0, d);
        if (d as f64) >= 2.0 * (p.alpha + p.gamma) {
            continue;
        }
        n += 1;
        for t in [0.1, 1.0, 10.0] {
            let c = check_l2(&p, t, 1e-6).map_err(|e| format!("{p:?} t={t}: {e}"))?;
            min_margin = min_margin.min(c.margin.unwrap_or(f64::NAN) / c.bound.unwrap_or(1.0));
            if !c.passed() {
                bad += 1;
            }
        }
    }
    verdict(bad == 0, format!("violations {bad}/150, min relative margin {min_margin:.3e}"))
}

fn nt_decay() -> Outcome {
    let mut r = rng(4);
    let mut bad = 0;
    let mut counts = [0usize; 3];
    for i in 0..200 {
        let beta = match i % 3 {
            0 => r.random_range(0.05..0.45),
            1 => 0.5,
            _ => r.random_range(0.55..=1.0),
        };
        counts[i % 3] += 1;
        let d = r.random_range(1..=3usize);
        let p = params(beta, r.random_range(0.5..3.0), r.random_range(0.0..1.0), 1.0, d);
        let t = 10f64.powf(r.random_range(-2.0..1.0));
        let rad = 10f64.powf(r.random_range(-3.0..3.0));
        let mut xi = vec![0.0; d];
        xi[0] = rad;
        let v = nt(&p, t, &xi).map_err(|e| e.to_string())?;
        let b = nt_bound(&p, t, &xi).map_err(|e| e.to_string())?;
        if !(v <= b * (1.0 + 1e-9)) {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("violations {bad}/200 (regime draws {counts:?})"))
}

fn increments() -> Outcome {
    let mut r = rng(5);
    let mut lines = Vec::new();
    let mut total_bad = 0;
    for (label, lo, hi) in [("beta<1/2", 0.05, 0.45), ("beta=1/2", 0.5, 0.5), ("beta>1/2", 0.55, 0.95)] {
        let mut bad = [0usize; 3];
        let mut n = 0;
        while n < 50 {
            let beta = if lo == hi { lo } else { r.random_range(lo..hi) };
            let (k, d) = if r.random::<bool>() {
                (SpectralKernel::white(), 1)
            } else {
                let d = r.random_range(1..=2usize);
                (SpectralKernel::riesz(r.random_range(0.1..(d as f64 - 0.05)), d).unwrap(), d)
            };
            let p = params(beta, r.random_range(0.5..3.0), r.random_range(0.0..1.0), 1.0, d);
            if select_eta(&p, &k).is_err() {
                continue;
            }
            let si = match SpectralIntegrator::new(&p, &k) {
                Ok(s) => s,
                Err(_) => continue,
            };
            n += 1;
            let t = r.random_range(0.2..5.0);
            let tp = t * r.random_range(0.0..1.0f64).max(1e-3);
            let h = r.random_range(0.01..1.0);
            let checks = check_increments(&si, t, tp, h, 1e-5).map_err(|e| format!("{p:?} {}: {e}", k.tag()))?;
            for (i, c) in checks.iter().enumerate() {
                if !c.passed() {
                    bad[i] += 1;
                }
            }
        }
        total_bad += bad.iter().sum::<usize>();
        lines.push(format!("{label}: violations [time-diff, time-recent, space] = {bad:?}"));
    }
    verdict(total_bad == 0, lines.join("; "))
}

fn dalang_agreement() -> Outcome {
    let mut r = rng(6);
    let mut compared = 0;
    let mut disagree = 0;
    for _ in 0..300 {
        let d = r.random_range(1..=3usize);
        let df = d as f64;
        let k = match r.random_range(0..3) {
            0 => SpectralKernel::riesz(r.random_range(0.05..df - 0.05), d).unwrap(),
            1 => SpectralKernel::bessel(r.random_range(0.05..2.0 * df), d).unwrap(),
            _ => SpectralKernel::fractional_product((0..d).map(|_| r.random_range(0.51..0.99)).collect()).unwrap(),
        };
        let e = r.random_range(0.05..3.0);
        let m = integrability_margin(&k, e).unwrap();
        if m.abs() <= 0.05 {
            continue;
        }
        compared += 1;
        let q = integrability_by_quadrature(&k, e);
        if (q.verdict == Verdict::Satisfied) != (m > 0.0) {
            disagree += 1;
        }
    }
    verdict(disagree == 0, format!("disagreements {disagree}/{compared} compared (300 drawn)"))
}

fn heat_regression() -> Outcome {
    let g = GridSpec::new(1, 4.0, 256, 1.0 / 128.0, 128).unwrap();
    let p = params(1.0, 2.0, 0.0, 1.0, 1);
    let k = SpectralKernel::white();
    let s = AdditiveSampler::new(&g, &p, &k).map_err(|e| e.to_string())?;
    let b = collect(&g, &BatchPlan::standard(&g), 10_000, |r| s.sample(7, r)).map_err(|e| e.to_string())?;
    let probe = b.probe();
    let want = (g.horizon() / (2.0 * std::f64::consts::PI)).sqrt();
    let z = (probe.m2() - want).abs() / probe.stderr_m2();
    let ft = holder_fit_batch(&b, &p, &k, Axis::Time).map_err(|e| e.to_string())?;
    let fs = holder_fit_batch(&b, &p, &k, Axis::Space).map_err(|e| e.to_string())?;
    let ok = z <= 5.0 && (ft.fitted_slope - 0.25).abs() <= 0.1 && (fs.fitted_slope - 0.5).abs() <= 0.1;
    verdict(
        ok,
        format!(
            "variance {:.5} vs {want:.5} (z = {z:.2}); time slope {:.3} ± {:.3}; space slope {:.3} ± {:.3}",
            probe.m2(),
            ft.fitted_slope,
            ft.slope_stderr,
            fs.fitted_slope,
            fs.slope_stderr
        ),
    )
}

fn stationary_covariance() -> Outcome {
    let g = GridSpec::new(1, 8.0, 256, 1.0 / 128.0, 128).unwrap();
    let p = params(0.75, 2.0, 0.5, 1.0, 1);
    let k = SpectralKernel::white();
    let s = AdditiveSampler::new(&g, &p, &k).map_err(|e| e.to_string())?;
    let plan = BatchPlan { pointwise: false, ..BatchPlan::standard(&g) };
    let b = collect(&g, &plan, 10_000, |r| s.sample(8, r)).map_err(|e| e.to_string())?;
    let model = CovarianceModel::new(&p, &k).map_err(|e| e.to_string())?;
    let cov = covariance_comparison(&b, &model).map_err(|e| e.to_string())?;
    let st = stationarity_check(&b);
    let zs: Vec<String> = cov.iter().map(|c| format!("{:.2}", c.value.unwrap())).collect();
    let ok = cov.len() == 5 && cov.iter().all(|c| c.passed()) && st.passed();
    verdict(ok, format!("lag z-scores [{}]; stationarity z {:.2}", zs.join(", "), st.value.unwrap()))
}

fn temporal_limit() -> Outcome {
    let g = GridSpec::new(1, 16.0, 256, 8.0 / 128.0, 128).unwrap();
    let p = params(0.75, 0.5, 1.0, 1.0, 1);
    let k = SpectralKernel::white();
    let s = AdditiveSampler::new(&g, &p, &k).map_err(|e| e.to_string())?;
    let plan = BatchPlan { pointwise: false, ..BatchPlan::standard(&g) };
    let b = collect(&g, &plan, 5_000, |r| s.sample(9, r)).map_err(|e| e.to_string())?;
    let ft = holder_fit_batch(&b, &p, &k, Axis::Time).map_err(|e| e.to_string())?;
    let ta = temporal_asymptotics(&p, &k, 0.5, &[5.0, 10.0, 20.0, 40.0]).map_err(|e| e.to_string())?;
    let diffs: Vec<String> = ta.covariances.windows(2).map(|w| format!("{:.3e}", (w[1] - w[0]).abs())).collect();
    let ok = (ft.fitted_slope - 0.25).abs() <= 0.1 && ta.cauchy;
    verdict(
        ok,
        format!(
            "time slope {:.3} ± {:.3} (target 0.25); covariance differences [{}], limit {:.5}",
            ft.fitted_slope,
            ft.slope_stderr,
            diffs.join(", "),
            ta.limit
        ),
    )
}

fn standard_grid() -> GridSpec {
    GridSpec::new(1, 16.0, 256, 4.0 / 128.0, 128).unwrap()
}

fn moment_scaling() -> Outcome {
    let g = standard_grid();
    let k = SpectralKernel::riesz(0.5, 1).unwrap();
    let sigma = SigmaSpec::Linear { l: 1.0 };
    let u0 = InitialCondition::Constant { value: 1.0 };
    let mut sweep = Vec::new();
    for lambda in [0.5, 1.0, 2.0, 4.0] {
        let p = params(0.75, 1.5, 0.5, lambda, 1);
        let m = second_moment_recursion(&g, &p, &k, &sigma, &u0, StepRule::Midpoint).map_err(|e| e.to_string())?;
        sweep.push((lambda, MomentReport::exact(g.dt, &m)));
    }
    let p = params(0.75, 1.5, 0.5, 1.0, 1);
    let (rates, chk) = moment_growth(&sweep, &p, &k).map_err(|e| e.to_string())?;
    let slope = chk.value.unwrap_or(f64::NAN);
    let e = chk.bound.unwrap();
    let monotone = chk.extra.get("monotone") == Some(&1.0);
    let r: Vec<String> = rates.iter().map(|g| format!("{}:{:.4}", g.lambda, g.rate)).collect();
    verdict(
        (slope - e).abs() <= 0.3 && monotone,
        format!("slope {slope:.4} vs {e:.4}; monotone {monotone}; rates [{}]; full check {:?}", r.join(", "), chk.verdict),
    )
}

fn picard_contraction() -> Outcome {
    let g = standard_grid();
    let p = params(0.75, 1.5, 0.5, 0.5, 1);
    let k = SpectralKernel::riesz(0.5, 1).unwrap();
    let solver = MildSolver::new(
        &g,
        &p,
        &k,
        &SigmaSpec::Linear { l: 1.0 },
        &InitialCondition::Constant { value: 1.0 },
        StepRule::Midpoint,
    )
    .map_err(|e| e.to_string())?;
    let slabs = (0..32).map(|r| synthesize_replica(&g, &k, 11, r)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let out = solver.picard(&slabs, 6, 0.0).map_err(|e| e.to_string())?;
    let d = &out.iterates_delta[..5];
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    let x: Vec<f64> = (1..=5).map(|n| n as f64).collect();
    let y: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / 5.0;
    let my = y.iter().sum::<f64>() / 5.0;
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    let ratio = slope.exp();
    let ds: Vec<String> = d.iter().map(|v| format!("{v:.3e}")).collect();
    verdict(decreasing && ratio < 1.0, format!("deltas [{}]; fitted ratio {ratio:.4}", ds.join(", ")))
}

const REPRO_CONFIG: &str = r#"
schema_version = 1

[params]
beta = 0.75
alpha = 1.5
gamma = 0.5

[kernel]
type = "riesz"
delta = 0.5

[grid]
n = 64
half_width = 8.0
horizon = 1.0
nt = 32

[sigma]
type = "linear"
l = 1.0

[u0]
type = "constant"
value = 1.0

[run]
mode = "walsh"
replicas = 100
seed = 12
"#;

fn reproducibility() -> Outcome {
    let cfg = RunConfig::parse(REPRO_CONFIG).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    pipeline::run(&cfg, &a).map_err(|e| e.to_string())?;
    pipeline::run(&cfg, &b).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for entry in std::fs::read_dir(&a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        if name.to_string_lossy().ends_with(".csv") {
            files.push(name);
        }
    }
    files.sort();
    let mut differ = Vec::new();
    for f in &files {
        if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
            differ.push(f.to_string_lossy().into_owned());
        }
    }
    let names: Vec<String> = files.iter().map(|f| f.to_string_lossy().into_owned()).collect();
    verdict(files.len() >= 3 && differ.is_empty(), format!("compared [{}]; differing [{}]", names.join(", "), differ.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("AC1  Mittag-Leffler sandwich", ml_sandwich),
        ("AC2  closed forms", closed_forms),
        ("AC3  Green L2 bound", green_l2_bound),
        ("AC4  N_t bound", nt_decay),
        ("AC5  increment bounds", increments),
        ("AC6  integrability checker", dalang_agreement),
        ("AC7  heat regression", heat_regression),
        ("AC8  stationary covariance", stationary_covariance),
        ("AC9  temporal regime beta>1/2", temporal_limit),
        ("AC10 moment growth scaling", moment_scaling),
        ("AC11 Picard contraction", picard_contraction),
        ("AC12 reproducibility", reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS {name} [{secs:.1}s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
