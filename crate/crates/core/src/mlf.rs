//! Mittag-Leffler function E_β(−x) on β ∈ (0, 1], x ≥ 0.

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadSpec};
use crate::scalar::{c, Scalar};
use crate::special::{gamma, ln_gamma};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Argument pair for E_β(−x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlQuery<T> {
    pub beta: T,
    pub x: T,
}

impl<T: Scalar> MlQuery<T> {
    pub fn new(beta: T, x: T) -> Result<Self> {
        let q = Self { beta, x };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > T::zero() && self.beta <= T::one()) {
            return Err(Error::invalid(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.x >= T::zero()) || self.x.is_infinite() {
            return Err(Error::invalid(format!("x must be finite and non-negative, got {}", self.x)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlRoute {
    Exact,
    Series,
    Asymptotic,
    Integral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlValue<T> {
    pub value: T,
    /// Estimated absolute error.
    pub error: T,
    pub route: MlRoute,
}

/// Evaluator for a fixed order β with cached series coefficients.
#[derive(Debug, Clone)]
pub struct MittagLeffler<T> {
    beta: T,
    /// ln Γ(1 + βk)
    series_lng: Vec<T>,
    /// ln Γ(βk) and sin(πβk)/π, k ≥ 1
    asym: Vec<(T, T)>,
    cos_bp: T,
    sin_bp: T,
    t_series: T,
    t_asym: T,
    rel: T,
    table: Option<ChebTable<T>>,
}

/// Piecewise Chebyshev interpolant of E_β(−x) in ln x over the range where
/// the integral route would otherwise be used.
#[derive(Debug, Clone)]
pub(crate) struct ChebTable<T> {
    y0: T,
    width: T,
    coeffs: Vec<Vec<T>>,
    x_lo: T,
    x_hi: T,
}

const CHEB_DEGREE: usize = 18;

impl<T: Scalar> ChebTable<T> {
    /// Fits f on [x_lo, x_hi] in ln x, doubling the piece count until the
    /// relative error at off-node points is below `tol` (or 256 pieces).
    pub(crate) fn fit<F: Fn(T) -> T>(f: F, x_lo: T, x_hi: T, tol: T, start: usize) -> Self {
        let (y0, y1) = (x_lo.ln(), x_hi.ln());
        let mut pieces = start.max(1);
        loop {
            let width = (y1 - y0) / T::from_usize_lossy(pieces);
            let coeffs = (0..pieces)
                .map(|i| {
                    let a = y0 + width * T::from_usize_lossy(i);
                    cheb_fit(|y| f(y.exp()), a, a + width, CHEB_DEGREE)
                })
                .collect();
            let table = ChebTable { y0, width, coeffs, x_lo, x_hi };
            let mut worst = T::zero();
            for i in 0..pieces {
                for frac in [0.137, 0.5, 0.911] {
                    let x = (y0 + width * (T::from_usize_lossy(i) + c(frac))).exp();
                    let direct = f(x);
                    worst = worst.max(((table.eval(x) - direct) / direct).abs());
                }
            }
            if worst <= tol || pieces >= 256 {
                return table;
            }
            pieces *= 2;
        }
    }

    #[inline]
    pub(crate) fn contains(&self, x: T) -> bool {
        x >= self.x_lo && x <= self.x_hi
    }

    #[inline]
    pub(crate) fn eval(&self, x: T) -> T {
        let y = x.ln();
        let pos = (y - self.y0) / self.width;
        let i = pos.floor().to_usize().unwrap_or(0).min(self.coeffs.len() - 1);
        let u = c::<T>(2.0) * (pos - T::from_usize_lossy(i)) - T::one();
        let cs = &self.coeffs[i];
        let (mut b1, mut b2) = (T::zero(), T::zero());
        for &ck in cs.iter().skip(1).rev() {
            let b0 = c::<T>(2.0) * u * b1 - b2 + ck;
            b2 = b1;
            b1 = b0;
        }
        u * b1 - b2 + cs[0]
    }
}

impl<T: Scalar> MittagLeffler<T> {
    pub fn new(beta: T) -> Result<Self> {
        MlQuery::new(beta, T::zero())?;
        let rel = c::<T>(256.0) * T::epsilon();
        let kmax = (c::<T>(60.0) / beta).ceil().to_usize().unwrap_or(1200).min(4000) + 40;
        let series_lng = (0..kmax).map(|k| ln_gamma(T::one() + beta * T::from_usize_lossy(k))).collect();
        let asym = (1..kmax)
            .map(|k| {
                let bk = beta * T::from_usize_lossy(k);
                (ln_gamma(bk), (T::PI() * bk).sin() / T::PI())
            })
            .collect();
        // beyond t_asym the exponentially small part e^{-T}/β is negligible
        let t_asym = (T::one() / (beta * rel)).ln() + c(2.0);
        Ok(Self {
            beta,
            series_lng,
            asym,
            cos_bp: (T::PI() * beta).cos(),
            sin_bp: (T::PI() * beta).sin(),
            t_series: c(3.0),
            t_asym,
            rel,
            table: None,
        })
    }

    /// Like [`MittagLeffler::new`] but replaces the integral route by a
    /// piecewise Chebyshev table, verified at construction against the
    /// integral to 1e-12 relative (f64). Used inside nested quadratures.
    pub fn tabulated(beta: T) -> Result<Self> {
        let mut ml = Self::new(beta)?;
        if beta == T::one() {
            return Ok(ml);
        }
        // first T at which the asymptotic series certifies
        let mut t_hi = ml.t_asym;
        for _ in 0..16 {
            if ml.asymptotic(t_hi.powf(beta), t_hi).is_some() {
                break;
            }
            t_hi = t_hi * c(1.25);
        }
        ml.t_asym = t_hi;
        let x_lo = ml.t_series.powf(beta);
        let x_hi = t_hi.powf(beta);
        let check_tol = (c::<T>(1e-12)).max(c::<T>(1e3) * T::epsilon());
        let table = ChebTable::fit(|x| ml.integral(x).value, x_lo, x_hi, check_tol, 8);
        ml.table = Some(table);
        Ok(ml)
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// E_β(−x) with an error estimate. Targets near machine relative accuracy.
    pub fn eval(&self, x: T) -> MlValue<T> {
        if x <= T::zero() {
            return MlValue { value: T::one(), error: T::zero(), route: MlRoute::Exact };
        }
        if self.beta == T::one() {
            let v = (-x).exp();
            return MlValue { value: v, error: v * T::epsilon(), route: MlRoute::Exact };
        }
        let t = x.powf(T::one() / self.beta);
        if t <= self.t_series {
            if let Some(v) = self.series(x) {
                return v;
            }
        }
        if t >= self.t_asym {
            if let Some(v) = self.asymptotic(x, t) {
                return v;
            }
        }
        if let Some(tab) = &self.table {
            if tab.contains(x) {
                let v = tab.eval(x);
                return MlValue { value: v, error: v * c(1e-12), route: MlRoute::Integral };
            }
        }
        self.integral(x)
    }

    /// Shorthand for `eval(x).value`.
    #[inline]
    pub fn value(&self, x: T) -> T {
        self.eval(x).value
    }

    fn series(&self, x: T) -> Option<MlValue<T>> {
        let lnx = x.ln();
        let mut sum = T::one();
        let mut abs_sum = T::one();
        let mut prev = T::one();
        for k in 1..self.series_lng.len() {
            let mag = (T::from_usize_lossy(k) * lnx - self.series_lng[k]).exp();
            let term = if k % 2 == 1 { -mag } else { mag };
            sum = sum + term;
            abs_sum = abs_sum + mag;
            if mag < prev && mag <= T::epsilon() * c(1e-2) * sum.abs() {
                let err = mag + abs_sum * T::epsilon() * c(4.0);
                if err > self.rel * c(1e3) * sum.abs() {
                    return None;
                }
                return Some(MlValue { value: sum, error: err, route: MlRoute::Series });
            }
            prev = mag;
        }
        None
    }

    fn asymptotic(&self, x: T, t: T) -> Option<MlValue<T>> {
        let lnx = x.ln();
        let mut sum = T::zero();
        let mut prev = T::infinity();
        let first = (self.asym[0].0 - lnx).exp() / T::PI();
        let scale = first.max(T::min_positive_value());
        for (i, &(lng, s)) in self.asym.iter().enumerate() {
            let k = i + 1;
            let bound = (lng - T::from_usize_lossy(k) * lnx).exp() / T::PI();
            if bound > prev {
                return None;
            }
            if bound <= self.rel * c(0.1) * sum.abs().max(scale * c(1e-3)) && k > 1 {
                let err = bound + (-t).exp() / self.beta;
                return Some(MlValue { value: sum, error: err, route: MlRoute::Asymptotic });
            }
            let mag = (lng - T::from_usize_lossy(k) * lnx).exp() * s;
            sum = if k % 2 == 1 { sum + mag } else { sum - mag };
            prev = bound;
        }
        None
    }

    fn integral(&self, x: T) -> MlValue<T> {
        let inv_b = T::one() / self.beta;
        let cb = self.cos_bp;
        let f = |s: T| {
            let den = s * s + c::<T>(2.0) * s * cb + T::one();
            (-(s * x).powf(inv_b)).exp() / den
        };
        let s_end = c::<T>(45.0).powf(self.beta) / x;
        let peak = (-cb).max(T::zero());
        let w = self.sin_bp;
        let mut pts = vec![T::zero(), s_end, T::one() / x, peak, peak - w, peak + w, peak - w * c(0.1), peak + w * c(0.1)];
        pts.retain(|p| *p >= T::zero() && *p <= s_end);
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        let spec = QuadSpec { abs_tol: T::zero(), rel_tol: self.rel, max_intervals: 4000 };
        let res = integrate(f, &pts, &spec);
        let pre = self.sin_bp / (self.beta * T::PI());
        let mut err = res.error * pre;
        if !res.converged {
            err = err.max(T::infinity());
        }
        MlValue { value: res.value * pre, error: err, route: MlRoute::Integral }
    }
}

fn cheb_fit<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, n: usize) -> Vec<T> {
    let nn = T::from_usize_lossy(n);
    let half = (b - a) / c(2.0);
    let mid = (a + b) / c(2.0);
    let vals: Vec<T> = (0..n)
        .map(|k| {
            let th = T::PI() * (T::from_usize_lossy(k) + c(0.5)) / nn;
            f(mid + half * th.cos())
        })
        .collect();
    (0..n)
        .map(|j| {
            let mut s = T::zero();
            for (k, &v) in vals.iter().enumerate() {
                let th = T::PI() * (T::from_usize_lossy(k) + c(0.5)) / nn;
                s = s + v * (T::from_usize_lossy(j) * th).cos();
            }
            let s = s * c::<T>(2.0) / nn;
            if j == 0 { s / c(2.0) } else { s }
        })
        .collect()
}

fn effective_tol<T: Scalar>(tol: T) -> Result<T> {
    if !(tol > T::zero() && tol <= c(1e-3)) {
        return Err(Error::invalid(format!("tol must lie in (0, 1e-3], got {tol}")));
    }
    // requests below the working precision are floored to it
    Ok(tol.max(c::<T>(64.0) * T::epsilon()))
}

/// E_β(−x) with absolute error at most `tol` (floored at 64ε of `T`).
pub fn eval_ml<T: Scalar>(q: MlQuery<T>, tol: T) -> Result<T> {
    q.validate()?;
    let tol = effective_tol(tol)?;
    let ml = MittagLeffler::new(q.beta)?;
    let v = ml.eval(q.x);
    if !(v.error <= tol) || !v.value.is_finite() {
        return Err(Error::numeric(format!(
            "Mittag-Leffler E_{}(-{}) could not be certified to {} (estimate {:e}, route {:?})",
            q.beta,
            q.x,
            tol,
            v.error.as_f64(),
            v.route
        )));
    }
    Ok(v.value.min(T::one()).max(T::zero()))
}

/// Two-sided bounds 1/(1+Γ(1−β)x) ≤ E_β(−x) ≤ 1/(1+x/Γ(1+β)).
/// At β = 1 the lower bound is e^{−x}.
pub fn ml_bounds<T: Scalar>(q: MlQuery<T>) -> Result<(T, T)> {
    q.validate()?;
    let upper = T::one() / (T::one() + q.x / gamma(T::one() + q.beta));
    let lower = if q.beta == T::one() {
        (-q.x).exp()
    } else {
        T::one() / (T::one() + gamma(T::one() - q.beta) * q.x)
    };
    Ok((lower, upper))
}
