//! `fracsk` command-line tool.
//!
//! Exit codes: 0 success, 1 other I/O failure, 2 config error,
//! 3 admissibility rejection, 4 numerical failure, 5 a requested check failed.
//!
//! Environment: `FRACSK_THREADS` sets the worker count, `FRACSK_OUT_DIR`
//! the output directory when `--out` is not given.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use fracsk::config::RunConfig;
use fracsk::green::{check_increments, check_l2, nt, nt_bound, SpectralIntegrator};
use fracsk::kernels::{check_hypothesis, check_hypothesis_2, check_tempered, dalang_exponent};
use fracsk::mlf::{eval_ml, ml_bounds, MlQuery};
use fracsk::pipeline::{self, AnalysisKind};
use fracsk::{BoundCheck, Error, Route, Verdict};

#[derive(Parser)]
#[command(name = "fracsk", version, about = "Space-time fractional stochastic kinetic equations")]
struct Cli {
    /// Emit JSON on stdout instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mittag-Leffler function.
    Mlf {
        #[command(subcommand)]
        cmd: MlfCmd,
    },
    /// Admissibility verdicts for a config.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Green function norms and bounds.
    Green {
        #[command(subcommand)]
        cmd: GreenCmd,
    },
    /// Sample replicas and write moments, summaries and a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyses of an existing run directory.
    Analyze {
        #[command(subcommand)]
        cmd: AnalyzeCmd,
    },
    /// Full pipeline: preflight, simulation and the configured analyses.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MlfCmd {
    /// E_β(−x) with its two-sided bounds.
    Eval {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

#[derive(Subcommand)]
enum GreenCmd {
    /// ‖ℱG_t‖² against its t-power bound.
    L2 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// N_t(ξ) against its decay bound.
    Nt {
        #[arg(long)]
        config: PathBuf,
        /// |ξ| (taken along the first axis)
        #[arg(long)]
        xi: f64,
        #[arg(long)]
        t: f64,
    },
    /// Temporal and spatial increment integrals against their bounds.
    Increments {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tprime: f64,
        #[arg(long)]
        h: f64,
    },
}

#[derive(clap::Args)]
struct Dirs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    Holder(Dirs),
    Moments(Dirs),
    Covariance(Dirs),
    Temporal(Dirs),
}

enum Failure {
    Err(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Err(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Inadmissible(_) => 3,
        Error::NonConvergence(_) | Error::MomentBlowUp { .. } | Error::NonContraction(_) => 4,
        Error::Io(_) => 1,
    }
}

fn emit(json: bool, checks: &[BoundCheck]) {
    for c in checks {
        if json {
            println!("{}", serde_json::to_string(c).expect("check serializes"));
        } else {
            println!("{c}");
        }
    }
}

fn finish(json: bool, checks: &[BoundCheck]) -> Result<(), Failure> {
    emit(json, checks);
    if checks.iter().any(BoundCheck::failed) {
        Err(Failure::Checks)
    } else {
        Ok(())
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    flag.or_else(|| std::env::var_os("FRACSK_OUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.and_then(|c| c.run.out.clone()))
        .unwrap_or_else(|| PathBuf::from("fracsk-out"))
}

#[derive(Serialize)]
struct MlReport {
    beta: f64,
    x: f64,
    value: f64,
    lower: f64,
    upper: f64,
}

fn hypotheses(cfg: &RunConfig) -> Result<Vec<BoundCheck>, Error> {
    let p = cfg.params()?;
    let k = cfg.kernel()?;
    let regime = p.regime().label();
    Ok(vec![
        check_hypothesis(&k, dalang_exponent(&p))?.with_regime(regime),
        check_hypothesis_2(&p, &k),
        check_tempered(&k)?,
    ])
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let json = cli.json;
    match cli.cmd {
        Cmd::Mlf { cmd: MlfCmd::Eval { beta, x, tol } } => {
            let q = MlQuery::new(beta, x)?;
            let value = eval_ml(q, tol)?;
            let (lower, upper) = ml_bounds(q)?;
            let r = MlReport { beta, x, value, lower, upper };
            println!("{}", serde_json::to_string(&r).expect("report serializes"));
            Ok(())
        }
        Cmd::Check { config } => {
            let cfg = RunConfig::load(&config)?;
            let checks = hypotheses(&cfg)?;
            emit(json, &checks);
            if checks[0].verdict != Verdict::Satisfied {
                return Err(Error::Inadmissible("Hypothesis 1 fails for this kernel and exponent".into()).into());
            }
            if checks.iter().any(BoundCheck::failed) {
                return Err(Failure::Checks);
            }
            Ok(())
        }
        Cmd::Green { cmd } => {
            let checks = match cmd {
                GreenCmd::L2 { config, t } => {
                    let p = RunConfig::load(&config)?.params()?;
                    vec![check_l2(&p, t, 1e-6)?]
                }
                GreenCmd::Nt { config, xi, t } => {
                    let p = RunConfig::load(&config)?.params()?;
                    let mut v = vec![0.0; p.d];
                    v[0] = xi;
                    let value = nt(&p, t, &v)?;
                    let bound = nt_bound(&p, t, &v)?;
                    vec![BoundCheck::upper("nt", Route::Quadrature, value, bound, 1e-9)
                        .with_regime(p.regime().label())
                        .with_extra("xi", xi)
                        .with_extra("t", t)]
                }
                GreenCmd::Increments { config, t, tprime, h } => {
                    let cfg = RunConfig::load(&config)?;
                    let si = SpectralIntegrator::new(&cfg.params()?, &cfg.kernel()?)?;
                    check_increments(&si, t, tprime, h, 1e-5)?
                }
            };
            finish(json, &checks)
        }
        Cmd::Simulate { config, replicas, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(r) = replicas {
                cfg.run.replicas = r;
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            cfg.analysis.moments = false;
            cfg.analysis.holder = false;
            cfg.analysis.covariance = false;
            cfg.analysis.temporal_tau = None;
            let dir = out_dir(out, Some(&cfg));
            let outcome = pipeline::run(&cfg, &dir)?;
            if !json {
                println!("wrote {}", dir.display());
            }
            finish(json, &outcome.preflight)
        }
        Cmd::Analyze { cmd } => {
            let (kind, dirs) = match cmd {
                AnalyzeCmd::Holder(d) => (AnalysisKind::Holder, d),
                AnalyzeCmd::Moments(d) => (AnalysisKind::Moments, d),
                AnalyzeCmd::Covariance(d) => (AnalysisKind::Covariance, d),
                AnalyzeCmd::Temporal(d) => (AnalysisKind::Temporal, d),
            };
            let out = dirs.out.unwrap_or_else(|| dirs.input.clone());
            let checks = pipeline::analyze(kind, &dirs.input, &out)?;
            finish(json, &checks)
        }
        Cmd::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out_dir(out, Some(&cfg));
            let outcome = pipeline::run(&cfg, &dir)?;
            if !json {
                println!("wrote {}", dir.display());
            }
            emit(json, &outcome.preflight);
            finish(json, &outcome.checks)?;
            if outcome.passed() {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
    }
}

fn init_threads() -> Result<(), Error> {
    if let Some(v) = std::env::var_os("FRACSK_THREADS") {
        let s = v.to_string_lossy();
        let n: usize = s.parse().map_err(|_| Error::Config(format!("FRACSK_THREADS must be a positive integer, got {s:?}")))?;
        if n == 0 {
            return Err(Error::Config("FRACSK_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().map_err(Failure::from).and_then(|_| execute(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => {
            eprintln!("fracsk: one or more checks failed");
            ExitCode::from(5)
        }
        Err(Failure::Err(e)) => {
            eprintln!("fracsk: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
