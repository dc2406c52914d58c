//! Config-driven runs: preflight, replica batch, artifacts and analyses.
//!
//! A run directory holds
//! - `manifest.json`: config echo, seed, version, normalization doc hash,
//!   preflight verdicts
//! - `moments.csv`: t, x, mean, m2, m4, stderr (of m2)
//! - `replicas.csv`: replica, probe, mean_sq, max_abs
//! - `stats.json`: the batch accumulators used by `analyze`
//! - `checks.jsonl`: one BoundCheck per line
//!
//! plus one CSV per requested analysis (see [`AnalysisKind::file`]).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    covariance_comparison_scaled, growth_rate, holder_fit_batch, stationarity_check, temporal_asymptotics, Axis,
    CovarianceModel, MomentReport,
};
use crate::check::{BoundCheck, Route, Verdict};
use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::noise::{spectral_std, synthesize_with_std};
use crate::sim::{smoothed_initial, AdditiveSampler, InitialCondition, MildSolver, SigmaSpec};
use crate::stats::{collect, BatchPlan, BatchStats};

pub const NORMALIZATION_DOC: &str = include_str!("../../../docs/NORMALIZATION.md");

pub fn normalization_sha256() -> String {
    hex(&Sha256::digest(NORMALIZATION_DOC.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub replicas: u64,
    pub grid: GridSpec,
    pub normalization_sha256: String,
    /// growth rates are fitted on [start, T]
    pub growth_window: (f64, f64),
    pub config: RunConfig,
    pub preflight: Vec<BoundCheck>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = read(&dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest.json: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    Holder,
    Moments,
    Covariance,
    Temporal,
}

impl AnalysisKind {
    pub fn file(&self) -> &'static str {
        match self {
            AnalysisKind::Holder => "holder.csv",
            AnalysisKind::Moments => "growth.csv",
            AnalysisKind::Covariance => "covariance.csv",
            AnalysisKind::Temporal => "temporal.csv",
        }
    }

    pub fn requested(cfg: &RunConfig) -> Vec<AnalysisKind> {
        let a = &cfg.analysis;
        let mut v = Vec::new();
        if a.moments {
            v.push(AnalysisKind::Moments);
        }
        if a.holder {
            v.push(AnalysisKind::Holder);
        }
        if a.covariance {
            v.push(AnalysisKind::Covariance);
        }
        if a.temporal_tau.is_some() {
            v.push(AnalysisKind::Temporal);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub preflight: Vec<BoundCheck>,
    pub checks: Vec<BoundCheck>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        !self.preflight.iter().chain(&self.checks).any(BoundCheck::failed)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn sigma_scale(cfg: &RunConfig) -> Option<f64> {
    match cfg.sigma {
        SigmaSpec::Constant { c } => Some(cfg.params.lambda * c),
        _ => None,
    }
}

/// Replica batch for a validated config, with the standard batch plan.
pub fn simulate(cfg: &RunConfig) -> Result<BatchStats> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let kernel = cfg.kernel()?;
    let plan = BatchPlan::standard(&grid);
    let seed = cfg.run.seed;
    match cfg.run.mode {
        Mode::Additive => {
            let scale = sigma_scale(cfg).ok_or_else(|| Error::Config("additive mode needs a constant sigma".into()))?;
            let sampler = AdditiveSampler::new(&grid, &params, &kernel)?;
            let base = smoothed_initial(&grid, &params, &cfg.u0)?;
            collect(&grid, &plan, cfg.run.replicas, |r| sampler.sample(seed, r)?.affine(&base, scale))
        }
        Mode::Walsh => {
            let solver = MildSolver::new(&grid, &params, &kernel, &cfg.sigma, &cfg.u0, cfg.run.step_rule)?;
            let std = spectral_std(&grid, &kernel)?;
            collect(&grid, &plan, cfg.run.replicas, |r| solver.walsh(&synthesize_with_std(&grid, &kernel, &std, seed, r)))
        }
    }
}

/// Preflight, simulate, write artifacts and run the requested analyses.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let preflight = cfg.preflight()?;
    let grid = cfg.grid()?;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let report_start = {
        let n = grid.nt + 1;
        grid.time(n - n.div_ceil(3))
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.run.seed,
        replicas: cfg.run.replicas,
        grid,
        normalization_sha256: normalization_sha256(),
        growth_window: (report_start, grid.horizon()),
        config: cfg.clone(),
        preflight: preflight.clone(),
    };
    let mut w = create(&dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;

    let batch = simulate(cfg)?;
    batch.write_moments_csv(create(&dir.join("moments.csv"))?)?;
    batch.write_replicas_csv(create(&dir.join("replicas.csv"))?)?;
    let mut w = create(&dir.join("stats.json"))?;
    serde_json::to_writer(&mut w, &batch).map_err(|e| Error::Io(e.to_string()))?;
    w.flush()?;

    let report = MomentReport::from_batch(&batch)?;
    let mut checks = Vec::new();
    for kind in AnalysisKind::requested(cfg) {
        checks.extend(analyze_batch(kind, cfg, &batch, &report, dir)?);
    }
    write_checks(&dir.join("checks.jsonl"), &checks)?;
    Ok(RunOutcome { dir: dir.to_path_buf(), preflight, checks })
}

pub fn write_checks(path: &Path, checks: &[BoundCheck]) -> Result<()> {
    let mut w = create(path)?;
    for c in checks {
        writeln!(w, "{}", serde_json::to_string(c).map_err(|e| Error::Io(e.to_string()))?)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds the moment report from `moments.csv`: per time, the row with the
/// largest m2.
pub fn read_moments(path: &Path) -> Result<MomentReport> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = MomentReport { times: Vec::new(), sup_m2: Vec::new(), stderr: Vec::new(), replicas: 0 };
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Io(format!("{}: bad number in column {i}", path.display())))
        };
        let (t, m2, se) = (num(0)?, num(3)?, num(5)?);
        if out.times.last() != Some(&t) {
            out.times.push(t);
            out.sup_m2.push(m2);
            out.stderr.push(se);
        } else if m2 > *out.sup_m2.last().unwrap() {
            *out.sup_m2.last_mut().unwrap() = m2;
            *out.stderr.last_mut().unwrap() = se;
        }
    }
    if out.times.is_empty() {
        return Err(Error::Io(format!("{}: no rows", path.display())));
    }
    Ok(out)
}

/// Runs one analysis on an existing run directory, writing its CSV and a
/// `checks-<kind>.jsonl` into `out`.
pub fn analyze(kind: AnalysisKind, input: &Path, out: &Path) -> Result<Vec<BoundCheck>> {
    let manifest = Manifest::load(input)?;
    let text = read(&input.join("stats.json"))?;
    let batch: BatchStats = serde_json::from_str(&text).map_err(|e| Error::Io(format!("stats.json: {e}")))?;
    let mut report = read_moments(&input.join("moments.csv"))?;
    report.replicas = batch.count();
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let checks = analyze_batch(kind, &manifest.config, &batch, &report, out)?;
    write_checks(&out.join(format!("checks-{name}.jsonl")), &checks)?;
    Ok(checks)
}

fn analyze_batch(kind: AnalysisKind, cfg: &RunConfig, batch: &BatchStats, report: &MomentReport, dir: &Path) -> Result<Vec<BoundCheck>> {
    let params = cfg.params()?;
    let kernel = cfg.kernel()?;
    let mut wr = csv::Writer::from_writer(create(&dir.join(kind.file()))?);
    let mut checks = Vec::new();
    match kind {
        AnalysisKind::Moments => {
            wr.write_record(["t", "sup_m2", "stderr"]).map_err(csv_err)?;
            for i in 0..report.times.len() {
                wr.write_record([report.times[i].to_string(), report.sup_m2[i].to_string(), report.stderr[i].to_string()])
                    .map_err(csv_err)?;
            }
            let c = match growth_rate(report) {
                Ok((rate, se)) => BoundCheck::new("growth-rate", Route::MonteCarlo, Verdict::NotApplicable)
                    .with_value(rate)
                    .with_extra("stderr", se)
                    .with_extra("lambda", params.lambda)
                    .with_note("single run; the scaling check needs a lambda sweep"),
                Err(e) => BoundCheck::new("growth-rate", Route::MonteCarlo, Verdict::NotApplicable).with_note(e.to_string()),
            };
            checks.push(c);
        }
        AnalysisKind::Holder => {
            wr.write_record(["axis", "lag", "m2", "stderr", "fitted_slope", "slope_stderr", "window_low", "window_high"])
                .map_err(csv_err)?;
            for axis in [Axis::Time, Axis::Space] {
                let fit = holder_fit_batch(batch, &params, &kernel, axis)?;
                let label = match axis {
                    Axis::Time => "time",
                    Axis::Space => "space",
                };
                for i in 0..fit.lags.len() {
                    wr.write_record([
                        label.to_string(),
                        fit.lags[i].to_string(),
                        fit.m2_increments[i].to_string(),
                        fit.m2_stderr[i].to_string(),
                        fit.fitted_slope.to_string(),
                        fit.slope_stderr.to_string(),
                        fit.theoretical_window.0.to_string(),
                        fit.theoretical_window.1.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
                checks.push(fit.check().with_regime(params.regime().label()));
            }
        }
        AnalysisKind::Covariance => {
            let scale = sigma_scale(cfg).ok_or_else(|| Error::Config("covariance analysis needs a constant sigma".into()))?;
            if cfg.u0 != InitialCondition::Zero {
                return Err(Error::Config("covariance analysis needs u0 = zero".into()));
            }
            let model = CovarianceModel::new(&params, &kernel)?;
            wr.write_record(["lag", "empirical", "stderr", "quadrature", "z"]).map_err(csv_err)?;
            for c in covariance_comparison_scaled(batch, &model, scale)? {
                let x = |k: &str| c.extra.get(k).copied().unwrap_or(f64::NAN).to_string();
                wr.write_record([x("lag"), x("empirical"), x("stderr"), x("quadrature"), c.value.unwrap_or(f64::NAN).to_string()])
                    .map_err(csv_err)?;
                checks.push(c);
            }
            checks.push(stationarity_check(batch));
        }
        AnalysisKind::Temporal => {
            let tau = cfg.analysis.temporal_tau.unwrap_or(0.0);
            let ta = temporal_asymptotics(&params, &kernel, tau, &cfg.analysis.temporal_times)?;
            wr.write_record(["t", "covariance", "limit"]).map_err(csv_err)?;
            for (t, c) in ta.times.iter().zip(&ta.covariances) {
                wr.write_record([t.to_string(), c.to_string(), ta.limit.to_string()]).map_err(csv_err)?;
            }
            checks.push(ta.check());
        }
    }
    wr.flush()?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema_version = 1
[params]
beta = 0.75
alpha = 2.0
gamma = 0.5
[kernel]
type = "white"
[grid]
n = 32
half_width = 4.0
horizon = 0.5
nt = 16
[run]
replicas = 40
seed = 3
[analysis]
covariance = true
"#;

    #[test]
    fn run_then_analyze_from_directory() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&cfg, tmp.path()).unwrap();
        for f in ["manifest.json", "moments.csv", "replicas.csv", "stats.json", "checks.jsonl", "holder.csv", "covariance.csv"] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
        let m = Manifest::load(tmp.path()).unwrap();
        assert_eq!(m.config, cfg);
        assert_eq!(m.normalization_sha256, normalization_sha256());
        let again = analyze(AnalysisKind::Holder, tmp.path(), &tmp.path().join("re")).unwrap();
        let first: Vec<_> = out.checks.iter().filter(|c| c.quantity.starts_with("holder")).cloned().collect();
        assert_eq!(again, first);
        let a = fs::read(tmp.path().join("holder.csv")).unwrap();
        let b = fs::read(tmp.path().join("re/holder.csv")).unwrap();
        assert_eq!(a, b);
        let rep = read_moments(&tmp.path().join("moments.csv")).unwrap();
        assert_eq!(rep.times.len(), 17);
    }

    #[test]
    fn manifest_alone_reproduces_the_run() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        run(&cfg, &a).unwrap();
        run(&Manifest::load(&a).unwrap().config, &b).unwrap();
        for f in ["moments.csv", "replicas.csv", "holder.csv", "covariance.csv", "growth.csv", "checks.jsonl", "stats.json", "manifest.json"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn normalization_hash_is_hex() {
        let h = normalization_sha256();
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }
}
