//! Spatial covariance structures given by their spectral measures, and the
//! admissibility conditions on them.

use serde::{Deserialize, Serialize};

use crate::check::{BoundCheck, Route, Verdict};
use crate::error::{Error, Result};
use crate::quad::{dyadic_tail_scan, integrate_power_origin, QuadSpec, TailVerdict};
use crate::scalar::{c, Scalar};
use crate::special::{gamma, sphere_area};

/// Equation parameters (β, α, γ, ν, λ, d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams<T> {
    pub beta: T,
    pub alpha: T,
    pub gamma: T,
    pub nu: T,
    pub lambda: T,
    pub d: usize,
}

/// Which branch of the three-case exponent tables applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaRegime {
    /// 0 < β < 1/2
    Below,
    /// β = 1/2
    Critical,
    /// 1/2 < β < 1
    Above,
    /// β = 1
    Heat,
}

impl BetaRegime {
    pub fn label(&self) -> &'static str {
        match self {
            BetaRegime::Below => "0<beta<1/2",
            BetaRegime::Critical => "beta=1/2",
            BetaRegime::Above => "1/2<beta<1",
            BetaRegime::Heat => "beta=1",
        }
    }
}

impl<T: Scalar> FracParams<T> {
    pub fn new(beta: T, alpha: T, gamma: T, nu: T, lambda: T, d: usize) -> Result<Self> {
        let p = Self { beta, alpha, gamma, nu, lambda, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |b: bool, m: &str| if b { Ok(()) } else { Err(Error::invalid(m.to_string())) };
        ok(self.beta > T::zero() && self.beta <= T::one(), "beta must lie in (0, 1]")?;
        ok(self.alpha > T::zero() && self.alpha.is_finite(), "alpha must be positive")?;
        ok(self.gamma >= T::zero() && self.gamma.is_finite(), "gamma must be non-negative")?;
        ok(self.nu > T::zero() && self.nu.is_finite(), "nu must be positive")?;
        ok(self.lambda >= T::zero() && self.lambda.is_finite(), "lambda must be non-negative")?;
        ok(self.d >= 1, "d must be at least 1")
    }

    pub fn regime(&self) -> BetaRegime {
        let half = c::<T>(0.5);
        if self.beta == T::one() {
            BetaRegime::Heat
        } else if self.beta < half {
            BetaRegime::Below
        } else if self.beta == half {
            BetaRegime::Critical
        } else {
            BetaRegime::Above
        }
    }

    /// α + γ
    pub fn order(&self) -> T {
        self.alpha + self.gamma
    }

    /// Symbol ν|ξ|^α(1+|ξ|²)^{γ/2} at radius r.
    #[inline]
    pub fn symbol(&self, r: T) -> T {
        if r == T::zero() {
            return T::zero();
        }
        let mut s = self.nu * r.powf(self.alpha);
        if self.gamma != T::zero() {
            s = s * (T::one() + r * r).powf(self.gamma / c(2.0));
        }
        s
    }

    pub fn dim(&self) -> T {
        T::from_usize_lossy(self.d)
    }

    pub fn to_f64(&self) -> FracParams<f64> {
        FracParams {
            beta: self.beta.as_f64(),
            alpha: self.alpha.as_f64(),
            gamma: self.gamma.as_f64(),
            nu: self.nu.as_f64(),
            lambda: self.lambda.as_f64(),
            d: self.d,
        }
    }
}

/// Dalang exponent ϱ: α+γ below β = 1/2, (α+γ)/2 at β = 1/2 and (α+γ)/(2β) above.
pub fn dalang_exponent<T: Scalar>(p: &FracParams<T>) -> T {
    match p.regime() {
        BetaRegime::Below => p.order(),
        BetaRegime::Critical => p.order() / c(2.0),
        BetaRegime::Above | BetaRegime::Heat => p.order() / (c::<T>(2.0) * p.beta),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKind<T> {
    Riesz { delta: T },
    Bessel { tau: T },
    FractionalProduct { h: Vec<T> },
    White,
    Finite { mass: T },
}

/// Spectral measure μ(dξ) on R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralKernel<T> {
    pub kind: KernelKind<T>,
    pub d: usize,
}

impl<T: Scalar> SpectralKernel<T> {
    pub fn new(kind: KernelKind<T>, d: usize) -> Result<Self> {
        let k = Self { kind, d };
        k.validate()?;
        Ok(k)
    }

    pub fn riesz(delta: T, d: usize) -> Result<Self> {
        Self::new(KernelKind::Riesz { delta }, d)
    }

    pub fn bessel(tau: T, d: usize) -> Result<Self> {
        Self::new(KernelKind::Bessel { tau }, d)
    }

    pub fn fractional_product(h: Vec<T>) -> Result<Self> {
        let d = h.len();
        Self::new(KernelKind::FractionalProduct { h }, d)
    }

    pub fn white() -> Self {
        Self { kind: KernelKind::White, d: 1 }
    }

    pub fn finite(mass: T, d: usize) -> Result<Self> {
        Self::new(KernelKind::Finite { mass }, d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("kernel dimension must be positive"));
        }
        let d = T::from_usize_lossy(self.d);
        match &self.kind {
            KernelKind::Riesz { delta } => {
                if !(*delta > T::zero() && *delta < d) {
                    return Err(Error::invalid(format!("Riesz delta must lie in (0, d), got {delta}")));
                }
            }
            KernelKind::Bessel { tau } => {
                if !(*tau > T::zero() && tau.is_finite()) {
                    return Err(Error::invalid(format!("Bessel tau must be positive, got {tau}")));
                }
            }
            KernelKind::FractionalProduct { h } => {
                if h.len() != self.d {
                    return Err(Error::invalid("fractional product needs one Hurst index per dimension"));
                }
                if h.iter().any(|&x| !(x > c(0.5) && x < T::one())) {
                    return Err(Error::invalid("Hurst indices must lie in (1/2, 1)"));
                }
            }
            KernelKind::White => {
                if self.d != 1 {
                    return Err(Error::invalid("white noise is only supported in d = 1"));
                }
            }
            KernelKind::Finite { mass } => {
                if !(*mass > T::zero() && mass.is_finite()) {
                    return Err(Error::invalid("finite measure needs a positive total mass"));
                }
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            KernelKind::Riesz { .. } => "riesz",
            KernelKind::Bessel { .. } => "bessel",
            KernelKind::FractionalProduct { .. } => "fractional_product",
            KernelKind::White => "white",
            KernelKind::Finite { .. } => "finite",
        }
    }

    pub fn is_isotropic(&self) -> bool {
        !matches!(self.kind, KernelKind::FractionalProduct { .. })
    }

    /// True when the density is infinite at ξ = 0.
    pub fn singular_at_origin(&self) -> bool {
        matches!(self.kind, KernelKind::Riesz { .. } | KernelKind::FractionalProduct { .. })
    }

    /// Density of μ at ξ.
    pub fn density(&self, xi: &[T]) -> Result<T> {
        if xi.len() != self.d {
            return Err(Error::invalid(format!("expected a point in R^{}, got length {}", self.d, xi.len())));
        }
        if let KernelKind::FractionalProduct { h } = &self.kind {
            if xi.iter().any(|&x| x == T::zero()) {
                return Err(Error::invalid("fractional product density is singular on the coordinate axes"));
            }
            let mut v = T::one();
            for (&x, &hi) in xi.iter().zip(h) {
                v = v * hi * (c::<T>(2.0) * hi - T::one()) * x.abs().powf(T::one() - c::<T>(2.0) * hi);
            }
            return Ok(v);
        }
        let r2 = xi.iter().fold(T::zero(), |a, &x| a + x * x);
        if r2 == T::zero() && self.singular_at_origin() {
            return Err(Error::invalid("density is singular at the origin"));
        }
        Ok(self.radial_density(r2.sqrt()))
    }

    /// Density as a function of |ξ| for isotropic kernels. For the
    /// fractional product this returns the angular average along the diagonal
    /// scaling r^{Σ(1−2H_i)} without constants.
    pub fn radial_density(&self, r: T) -> T {
        match &self.kind {
            KernelKind::Riesz { delta } => r.powf(-*delta),
            KernelKind::Bessel { tau } => (T::one() + r * r).powf(-*tau / c(2.0)),
            KernelKind::White => T::one(),
            KernelKind::Finite { mass } => {
                let d = T::from_usize_lossy(self.d);
                *mass * (c::<T>(2.0) * T::PI()).powf(-d / c(2.0)) * (-(r * r) / c(2.0)).exp()
            }
            KernelKind::FractionalProduct { h } => {
                let e = h.iter().fold(T::zero(), |a, &hi| a + T::one() - c::<T>(2.0) * hi);
                r.powf(e)
            }
        }
    }

    /// Constant A with ∫ h(|ξ|) μ(dξ) = A ∫_0^∞ h(r) r^{d−1} radial_density(r) dr.
    pub fn angular_constant(&self) -> T {
        match &self.kind {
            KernelKind::FractionalProduct { h } => {
                let mut prod = T::one();
                let mut s = T::zero();
                for &hi in h {
                    prod = prod * hi * (c::<T>(2.0) * hi - T::one()) * gamma(T::one() - hi);
                    s = s + T::one() - hi;
                }
                c::<T>(2.0) * prod / gamma(s)
            }
            _ => sphere_area(self.d),
        }
    }

    /// Radial weight m(r) = A r^{d−1} radial_density(r).
    #[inline]
    pub fn radial_weight(&self, r: T) -> T {
        let d = self.d as i32;
        self.angular_constant_cached() * r.powi(d - 1) * self.radial_density(r)
    }

    fn angular_constant_cached(&self) -> T {
        self.angular_constant()
    }

    /// Exponent q with m(r) ~ r^q as r → 0.
    pub fn origin_exponent(&self) -> T {
        let base = T::from_usize_lossy(self.d) - T::one();
        match &self.kind {
            KernelKind::Riesz { delta } => base - *delta,
            KernelKind::FractionalProduct { h } => {
                base + h.iter().fold(T::zero(), |a, &hi| a + T::one() - c::<T>(2.0) * hi)
            }
            _ => base,
        }
    }

    /// Exponent q with m(r) ~ r^q as r → ∞ (−∞ for the Gaussian density).
    pub fn tail_exponent(&self) -> T {
        let base = T::from_usize_lossy(self.d) - T::one();
        match &self.kind {
            KernelKind::Riesz { delta } => base - *delta,
            KernelKind::Bessel { tau } => base - *tau,
            KernelKind::FractionalProduct { .. } => self.origin_exponent(),
            KernelKind::White => base,
            KernelKind::Finite { .. } => T::neg_infinity(),
        }
    }

    /// f64 copy, used by the numerical routes.
    pub fn to_f64(&self) -> SpectralKernel<f64> {
        let kind = match &self.kind {
            KernelKind::Riesz { delta } => KernelKind::Riesz { delta: delta.as_f64() },
            KernelKind::Bessel { tau } => KernelKind::Bessel { tau: tau.as_f64() },
            KernelKind::FractionalProduct { h } => {
                KernelKind::FractionalProduct { h: h.iter().map(|x| x.as_f64()).collect() }
            }
            KernelKind::White => KernelKind::White,
            KernelKind::Finite { mass } => KernelKind::Finite { mass: mass.as_f64() },
        };
        SpectralKernel { kind, d: self.d }
    }
}

/// Precomputed radial weight for repeated evaluation in f64.
#[derive(Debug, Clone)]
pub struct RadialMeasure {
    kernel: SpectralKernel<f64>,
    constant: f64,
    pub origin_exponent: f64,
    pub tail_exponent: f64,
}

impl RadialMeasure {
    pub fn new<T: Scalar>(k: &SpectralKernel<T>) -> Self {
        let kernel = k.to_f64();
        Self {
            constant: kernel.angular_constant(),
            origin_exponent: kernel.origin_exponent(),
            tail_exponent: kernel.tail_exponent(),
            kernel,
        }
    }

    /// m(r) = A r^{d−1} ρ(r)
    #[inline]
    pub fn weight(&self, r: f64) -> f64 {
        self.constant * r.powi(self.kernel.d as i32 - 1) * self.kernel.radial_density(r)
    }

    /// m(r) / r^{origin_exponent}, bounded near 0.
    #[inline]
    pub fn weight_reduced(&self, r: f64) -> f64 {
        if r == 0.0 {
            return match self.kernel.kind {
                KernelKind::Finite { mass } => {
                    self.constant * mass * (2.0 * std::f64::consts::PI).powf(-(self.kernel.d as f64) / 2.0)
                }
                _ => self.constant,
            };
        }
        self.weight(r) / r.powf(self.origin_exponent)
    }

    pub fn kernel(&self) -> &SpectralKernel<f64> {
        &self.kernel
    }

    /// ∫_{|ξ|<1} μ(dξ).
    pub fn mass_in_unit_ball(&self) -> f64 {
        integrate_power_origin(|r| self.weight_reduced(r), self.origin_exponent, 1.0, &QuadSpec::relative(1e-12))
            .value
    }

    /// ∫ g(|ξ|) μ(dξ) over |ξ| > 1 via dyadic shells; g must be non-negative.
    pub fn outer_integral<G: FnMut(f64) -> f64>(&self, mut g: G, max_shells: usize) -> TailVerdict {
        dyadic_tail_scan(|r| self.weight(r) * g(r), 1.0, max_shells, 1e-12)
    }
}

/// Closed-form margin of ∫(1+|ξ|²)^{−e}μ(dξ) < ∞ in the inequality variable;
/// positive means finite. `None` for the finite measure (always finite).
pub fn integrability_margin<T: Scalar>(k: &SpectralKernel<T>, e: T) -> Option<T> {
    let d = T::from_usize_lossy(k.d);
    let two = c::<T>(2.0);
    match &k.kind {
        KernelKind::Riesz { delta } => Some(two * e + *delta - d),
        KernelKind::Bessel { tau } => Some(two * e + *tau - d),
        KernelKind::FractionalProduct { h } => {
            Some(h.iter().fold(T::zero(), |a, &hi| a + two * hi - T::one()) - (d - two * e))
        }
        KernelKind::White => Some(two * e - d),
        KernelKind::Finite { .. } => None,
    }
}

fn closed_form_statement<T: Scalar>(k: &SpectralKernel<T>) -> &'static str {
    match k.kind {
        KernelKind::Riesz { .. } => "2e + delta > d",
        KernelKind::Bessel { .. } => "2e + tau > d",
        KernelKind::FractionalProduct { .. } => "sum(2H_i - 1) > d - 2e",
        KernelKind::White => "2e > d",
        KernelKind::Finite { .. } => "finite measure",
    }
}

/// Decides ∫(1+|ξ|²)^{−e}μ(dξ) < ∞ by radial quadrature with a dyadic tail scan.
pub fn integrability_by_quadrature<T: Scalar>(k: &SpectralKernel<T>, exponent: T) -> BoundCheck {
    let m = RadialMeasure::new(k);
    let e = exponent.as_f64();
    let quantity = format!("int (1+|xi|^2)^-{e:.4} mu(dxi)");
    if m.origin_exponent <= -1.0 {
        return BoundCheck::new(quantity, Route::Quadrature, Verdict::Violated)
            .with_note("measure is not locally integrable at the origin");
    }
    let head = integrate_power_origin(
        |r| m.weight_reduced(r) * (1.0 + r * r).powf(-e),
        m.origin_exponent,
        1.0,
        &QuadSpec::relative(1e-12),
    );
    match m.outer_integral(|r| (1.0 + r * r).powf(-e), 40) {
        TailVerdict::Convergent { value, shells, extrapolated } => {
            BoundCheck::new(quantity, Route::Quadrature, Verdict::Satisfied)
                .with_value(head.value + value)
                .with_extra("shells", shells as f64)
                .with_extra("extrapolated", if extrapolated { 1.0 } else { 0.0 })
        }
        TailVerdict::Divergent { ratio, shells } => BoundCheck::new(quantity, Route::Quadrature, Verdict::Violated)
            .with_extra("shell_ratio", ratio)
            .with_extra("shells", shells as f64),
        TailVerdict::Undecidable { shells, reason } => {
            BoundCheck::new(quantity, Route::Quadrature, Verdict::Undecidable)
                .with_extra("shells", shells as f64)
                .with_note(format!("undecidable numerically: {reason}"))
        }
    }
}

/// Closed-form verdict on ∫(1+|ξ|²)^{−e}μ(dξ) < ∞; when finite, the integral
/// value is attached from quadrature.
pub fn integrability_check<T: Scalar>(k: &SpectralKernel<T>, exponent: T, quantity: &str) -> BoundCheck {
    let margin = integrability_margin(k, exponent);
    let verdict = match margin {
        Some(m) if m > T::zero() => Verdict::Satisfied,
        Some(_) => Verdict::Violated,
        None => Verdict::Satisfied,
    };
    let mut out = BoundCheck::new(quantity, Route::ClosedForm, verdict)
        .with_note(closed_form_statement(k).replace('e', &format!("({:.6})", exponent.as_f64())));
    if let Some(m) = margin {
        out = out.with_margin(m.as_f64());
    }
    if verdict == Verdict::Satisfied {
        let q = integrability_by_quadrature(k, exponent);
        if let (Verdict::Satisfied, Some(v)) = (q.verdict, q.value) {
            out = out.with_value(v);
        }
    }
    out.with_extra("exponent", exponent.as_f64())
}

/// Hypothesis check ∫(1+|ξ|²)^{−ϱ}μ(dξ) < ∞ for a given exponent ϱ > 0.
pub fn check_hypothesis<T: Scalar>(k: &SpectralKernel<T>, exponent: T) -> Result<BoundCheck> {
    if !(exponent > T::zero()) {
        return Err(Error::invalid("exponent must be positive"));
    }
    k.validate()?;
    Ok(integrability_check(k, exponent, "hypothesis-1"))
}

/// Temperedness: smallest integer m ≤ 10 with ∫(1+|ξ|²)^{−m}μ(dξ) < ∞, plus the
/// mass of the unit ball.
pub fn check_tempered<T: Scalar>(k: &SpectralKernel<T>) -> Result<BoundCheck> {
    k.validate()?;
    let mass = RadialMeasure::new(k).mass_in_unit_ball();
    for m in 0..=10u32 {
        let q = integrability_by_quadrature(k, T::from_u32(m).unwrap());
        let closed = integrability_margin(k, T::from_u32(m).unwrap()).is_none_or(|mg| mg > T::zero());
        if closed && q.verdict == Verdict::Satisfied {
            let verdict = if mass > 0.0 && mass.is_finite() { Verdict::Satisfied } else { Verdict::Violated };
            return Ok(BoundCheck::new("tempered", Route::Quadrature, verdict)
                .with_value(m as f64)
                .with_extra("m", m as f64)
                .with_extra("near_origin_mass", mass)
                .with_extra("integral", q.value.unwrap_or(f64::NAN)));
        }
    }
    Ok(BoundCheck::new("tempered", Route::Quadrature, Verdict::Violated)
        .with_extra("near_origin_mass", mass)
        .with_note("no m <= 10 makes the measure tempered"))
}

/// δ with μ(dξ) ≍ |ξ|^{−δ}dξ when the kernel has one.
pub fn riesz_equivalent_delta<T: Scalar>(k: &SpectralKernel<T>) -> Option<T> {
    match &k.kind {
        KernelKind::Riesz { delta } => Some(*delta),
        KernelKind::Bessel { tau } if *tau < T::from_usize_lossy(k.d) => Some(*tau),
        KernelKind::White if k.d == 1 => Some(T::zero()),
        _ => None,
    }
}

/// Smallest η for which ∫(1+|ξ|²)^{−η}μ(dξ) < ∞ (open at this endpoint).
pub fn eta_lower<T: Scalar>(k: &SpectralKernel<T>) -> T {
    let d = T::from_usize_lossy(k.d);
    let two = c::<T>(2.0);
    let v = match &k.kind {
        KernelKind::Riesz { delta } => (d - *delta) / two,
        KernelKind::Bessel { tau } => (d - *tau) / two,
        KernelKind::FractionalProduct { h } => {
            (d - h.iter().fold(T::zero(), |a, &hi| a + two * hi - T::one())) / two
        }
        KernelKind::White => d / two,
        KernelKind::Finite { .. } => T::zero(),
    };
    v.max(T::zero())
}

/// Admissible (η, ρ) pair for the second integrability hypothesis:
/// η is the midpoint of (η_min, ϱ) and ρ the midpoint of (0, ϱ − η).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaChoice<T> {
    pub eta_min: T,
    pub eta_max: T,
    pub eta: T,
    pub rho_max: T,
    pub rho: T,
}

pub fn select_eta<T: Scalar>(p: &FracParams<T>, k: &SpectralKernel<T>) -> Result<EtaChoice<T>> {
    let eta_max = dalang_exponent(p);
    let eta_min = eta_lower(k);
    if !(eta_min < eta_max) {
        return Err(Error::inadmissible(format!(
            "eta window ({}, {}) is empty: the second integrability hypothesis cannot hold",
            eta_min.as_f64(),
            eta_max.as_f64()
        )));
    }
    let eta = (eta_min + eta_max) / c(2.0);
    let rho_max = eta_max - eta;
    Ok(EtaChoice { eta_min, eta_max, eta, rho_max, rho: rho_max / c(2.0) })
}

/// Hypothesis check at the selected η.
pub fn check_hypothesis_2<T: Scalar>(p: &FracParams<T>, k: &SpectralKernel<T>) -> BoundCheck {
    match select_eta(p, k) {
        Ok(ch) => integrability_check(k, ch.eta, "hypothesis-2")
            .with_regime(p.regime().label())
            .with_extra("eta_min", ch.eta_min.as_f64())
            .with_extra("eta_max", ch.eta_max.as_f64()),
        Err(e) => BoundCheck::new("hypothesis-2", Route::ClosedForm, Verdict::Violated)
            .with_regime(p.regime().label())
            .with_note(e.to_string()),
    }
}
