//! Run configuration: one TOML (or JSON) file with sections for the
//! equation, the noise kernel, the grid, σ, u₀, the run and the analyses.
//! Every field outside `[params]` and `[kernel]` has a default; unknown keys
//! are rejected. See `docs/CONFIG.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::check::{BoundCheck, Route, Verdict};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{check_hypothesis, check_hypothesis_2, check_tempered, dalang_exponent, FracParams, KernelKind, SpectralKernel};
use crate::sim::{InitialCondition, SigmaSpec, StepRule};

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub beta: f64,
    pub alpha: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
}

impl ParamsSection {
    pub fn to_params(&self) -> FracParams<f64> {
        FracParams { beta: self.beta, alpha: self.alpha, gamma: self.gamma, nu: self.nu, lambda: self.lambda, d: self.d }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub half_width: f64,
    /// final time T; dt = T/nt
    pub horizon: f64,
    pub nt: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 256, half_width: 8.0, horizon: 1.0, nt: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// exact Gaussian sampling; σ must be constant
    #[default]
    Additive,
    /// explicit mild-form recursion
    Walsh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub mode: Mode,
    pub replicas: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub step_rule: StepRule,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { mode: Mode::Additive, replicas: 1000, seed: 0, out: None, step_rule: StepRule::Midpoint }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// growth rate of sup_x E|u|² over the last third of the horizon
    pub moments: bool,
    /// time and space Hölder fits; requires the second hypothesis
    pub holder: bool,
    /// empirical covariance against quadrature, and stationarity
    pub covariance: bool,
    /// τ for the temporal covariance limit; off when absent
    pub temporal_tau: Option<f64>,
    pub temporal_times: Vec<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { moments: true, holder: true, covariance: false, temporal_tau: None, temporal_times: vec![5.0, 10.0, 20.0, 40.0] }
    }
}

fn default_sigma() -> SigmaSpec {
    SigmaSpec::Constant { c: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub params: ParamsSection,
    pub kernel: KernelKind<f64>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub u0: InitialCondition,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl RunConfig {
    /// JSON when the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let (cfg, kernel_keys): (RunConfig, Vec<String>) = if text.trim_start().starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            let keys = v.get("kernel").and_then(|k| k.as_object()).map(|o| o.keys().cloned().collect()).unwrap_or_default();
            (serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?, keys)
        } else {
            let v: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            let keys = v.get("kernel").and_then(|k| k.as_table()).map(|t| t.keys().cloned().collect()).unwrap_or_default();
            (toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?, keys)
        };
        // unit variants of a tagged enum ignore extra keys, so check them here
        let allowed: &[&str] = match cfg.kernel {
            KernelKind::Riesz { .. } => &["type", "delta"],
            KernelKind::Bessel { .. } => &["type", "tau"],
            KernelKind::FractionalProduct { .. } => &["type", "h"],
            KernelKind::White => &["type"],
            KernelKind::Finite { .. } => &["type", "mass"],
        };
        if let Some(k) = kernel_keys.iter().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("[kernel]: unknown field `{k}` for type {}", cfg.kernel_tag())));
        }
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    fn kernel_tag(&self) -> &'static str {
        match self.kernel {
            KernelKind::Riesz { .. } => "riesz",
            KernelKind::Bessel { .. } => "bessel",
            KernelKind::FractionalProduct { .. } => "fractional_product",
            KernelKind::White => "white",
            KernelKind::Finite { .. } => "finite",
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<FracParams<f64>> {
        let p = self.params.to_params();
        p.validate().map_err(|e| Error::Config(format!("[params]: {e}")))?;
        Ok(p)
    }

    pub fn kernel(&self) -> Result<SpectralKernel<f64>> {
        let d = match &self.kernel {
            KernelKind::White => 1,
            KernelKind::FractionalProduct { h } => h.len(),
            _ => self.params.d,
        };
        if d != self.params.d {
            return Err(Error::Config(format!("[kernel]: dimension {d} does not match params.d = {}", self.params.d)));
        }
        SpectralKernel::new(self.kernel.clone(), d).map_err(|e| Error::Config(format!("[kernel]: {e}")))
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = &self.grid;
        if !(g.horizon > 0.0 && g.horizon.is_finite()) || g.nt == 0 {
            return Err(Error::Config("[grid]: horizon must be positive and nt at least 1".into()));
        }
        GridSpec::new(self.params.d, g.half_width, g.n, g.horizon / g.nt as f64, g.nt)
            .map_err(|e| Error::Config(format!("[grid]: {e}")))
    }

    /// Admissibility checks run before any computation. The first
    /// integrability hypothesis is mandatory; the second is checked when a
    /// Hölder fit is requested. A violated mandatory check is an
    /// [`Error::Inadmissible`].
    pub fn preflight(&self) -> Result<Vec<BoundCheck>> {
        let p = self.params()?;
        let k = self.kernel()?;
        let mut out = Vec::new();
        let h1 = check_hypothesis(&k, dalang_exponent(&p))?.with_regime(p.regime().label());
        if h1.verdict != Verdict::Satisfied {
            return Err(Error::inadmissible(format!(
                "Hypothesis 1 fails for kernel {} with exponent {:.6}: {}",
                k.tag(),
                dalang_exponent(&p),
                h1.note.clone().unwrap_or_default()
            )));
        }
        out.push(h1);
        out.push(check_tempered(&k)?);
        if self.analysis.holder {
            let h2 = check_hypothesis_2(&p, &k);
            if h2.verdict != Verdict::Satisfied {
                return Err(Error::inadmissible(format!(
                    "Hypothesis 2 fails (needed for Hölder analysis): {}",
                    h2.note.clone().unwrap_or_default()
                )));
            }
            out.push(h2);
        }
        self.sigma.validate().map_err(|e| Error::Config(format!("[sigma]: {e}")))?;
        let lip = self.sigma.lipschitz();
        let ok = self.sigma.verify_lipschitz(lip, 2000, self.run.seed);
        out.push(
            BoundCheck::new("sigma-lipschitz", Route::ClosedForm, if ok { Verdict::Satisfied } else { Verdict::Violated })
                .with_value(lip),
        );
        let grid = self.grid()?;
        self.u0.validate(&grid).map_err(|e| Error::Config(format!("[u0]: {e}")))?;
        if self.run.mode == Mode::Additive && !matches!(self.sigma, SigmaSpec::Constant { .. }) {
            return Err(Error::Config("[run]: additive mode needs a constant sigma; use mode = \"walsh\"".into()));
        }
        if self.run.replicas == 0 {
            return Err(Error::Config("[run]: replicas must be at least 1".into()));
        }
        if let Some(tau) = self.analysis.temporal_tau {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(Error::Config("[analysis]: temporal_tau must be finite and nonnegative".into()));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
schema_version = 1

[params]
beta = 0.75
alpha = 2.0
gamma = 0.5

[kernel]
type = "white"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(BASIC).unwrap();
        assert_eq!(c.params.nu, 1.0);
        assert_eq!(c.params.d, 1);
        assert_eq!(c.grid, GridSection::default());
        assert_eq!(c.sigma, SigmaSpec::Constant { c: 1.0 });
        assert_eq!(c.run.mode, Mode::Additive);
        assert!(c.preflight().is_ok());
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn json_is_accepted() {
        let c = RunConfig::parse(
            r#"{"schema_version":1,"params":{"beta":1.0,"alpha":2.0},"kernel":{"type":"riesz","delta":0.5},"run":{"replicas":4}}"#,
        )
        .unwrap();
        assert_eq!(c.kernel, KernelKind::Riesz { delta: 0.5 });
        assert_eq!(c.run.replicas, 4);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = BASIC.replace("gamma = 0.5", "gamma = 0.5\ngama = 1.0");
        let e = RunConfig::parse(&bad).unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.contains("gama")), "{e}");
        let bad = BASIC.replace("type = \"white\"", "type = \"white\"\ndelta = 0.3");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let e = RunConfig::parse(&BASIC.replace("schema_version = 1", "schema_version = 9")).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn bessel_in_three_dimensions_is_inadmissible() {
        let text = r#"
schema_version = 1
[params]
beta = 0.75
alpha = 0.5
gamma = 0.0
d = 3
[kernel]
type = "bessel"
tau = 0.1
"#;
        let e = RunConfig::parse(text).unwrap().preflight().unwrap_err();
        match e {
            Error::Inadmissible(m) => assert!(m.contains("Hypothesis 1"), "{m}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn additive_needs_constant_sigma() {
        let text = format!("{BASIC}\n[sigma]\ntype = \"linear\"\nl = 1.0\n");
        assert!(matches!(RunConfig::parse(&text).unwrap().preflight(), Err(Error::Config(_))));
    }
}
