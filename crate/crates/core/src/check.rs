//! Verdict records for inequalities and admissibility conditions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Undecidable,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    ClosedForm,
    Quadrature,
    MonteCarlo,
    Recursion,
}

/// Outcome of checking one inequality: computed value, bound and margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub quantity: String,
    pub route: Route,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub margin: Option<f64>,
    pub regime: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundCheck {
    pub fn new(quantity: impl Into<String>, route: Route, verdict: Verdict) -> Self {
        Self {
            quantity: quantity.into(),
            route,
            verdict,
            value: None,
            bound: None,
            margin: None,
            regime: None,
            extra: BTreeMap::new(),
            note: None,
        }
    }

    /// `value ≤ bound` style check; margin = bound − value.
    pub fn upper(quantity: impl Into<String>, route: Route, value: f64, bound: f64, slack: f64) -> Self {
        let verdict = if !value.is_finite() || !bound.is_finite() {
            Verdict::Undecidable
        } else if value <= bound + slack {
            Verdict::Satisfied
        } else {
            Verdict::Violated
        };
        Self::new(quantity, route, verdict).with_value(value).with_bound(bound).with_margin(bound - value)
    }

    pub fn with_value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn with_bound(mut self, b: f64) -> Self {
        self.bound = Some(b);
        self
    }

    pub fn with_margin(mut self, m: f64) -> Self {
        self.margin = Some(m);
        self
    }

    pub fn with_regime(mut self, r: impl Into<String>) -> Self {
        self.regime = Some(r.into());
        self
    }

    pub fn with_extra(mut self, key: &str, v: f64) -> Self {
        self.extra.insert(key.to_string(), v);
        self
    }

    pub fn with_note(mut self, n: impl Into<String>) -> Self {
        self.note = Some(n.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Satisfied
    }

    /// Violated or undecidable; not-applicable records do not fail a run.
    pub fn failed(&self) -> bool {
        matches!(self.verdict, Verdict::Violated | Verdict::Undecidable)
    }
}

impl fmt::Display for BoundCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<40} {:<12} {:?}", self.quantity, format!("{:?}", self.route), self.verdict)?;
        if let Some(v) = self.value {
            write!(f, "  value={v:.6e}")?;
        }
        if let Some(b) = self.bound {
            write!(f, "  bound={b:.6e}")?;
        }
        if let Some(m) = self.margin {
            write!(f, "  margin={m:.4e}")?;
        }
        Ok(())
    }
}
