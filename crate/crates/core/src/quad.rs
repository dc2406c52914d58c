//! Adaptive Gauss–Kronrod quadrature and helpers for radial integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_525_479,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Tolerances for adaptive integration. Stops when the estimated error is
/// below `max(abs_tol, rel_tol·|I|)`.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Scalar> QuadSpec<T> {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol: c(abs_tol), rel_tol: c(rel_tol), max_intervals: 2000 }
    }

    pub fn relative(rel_tol: f64) -> Self {
        Self::new(0.0, rel_tol)
    }

    fn target(&self, value: T) -> T {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

impl<T: Scalar> Default for QuadSpec<T> {
    fn default() -> Self {
        Self::new(0.0, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
    pub converged: bool,
}

impl<T: Scalar> QuadResult<T> {
    /// Turns an unconverged result into an error.
    pub fn certified(self, what: &str) -> Result<T> {
        if self.converged && self.value.is_finite() {
            Ok(self.value)
        } else {
            Err(Error::numeric(format!(
                "{what}: quadrature did not converge (value {:e}, error {:e})",
                self.value.as_f64(),
                self.error.as_f64()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn gk21<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Panel<T> {
    let half = (b - a) / c(2.0);
    let center = (a + b) / c(2.0);
    let fc = f(center);
    let mut res_k = fc * c(WGK[10]);
    let mut res_g = T::zero();
    let mut res_abs = fc.abs() * c(WGK[10]);
    let mut fv1 = [T::zero(); 10];
    let mut fv2 = [T::zero(); 10];
    for j in 0..10 {
        let dx = half * c(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k = res_k + (f1 + f2) * c(WGK[j]);
        res_abs = res_abs + (f1.abs() + f2.abs()) * c(WGK[j]);
        if j % 2 == 1 {
            res_g = res_g + (f1 + f2) * c(WG[j / 2]);
        }
    }
    let mean = res_k / c(2.0);
    let mut res_asc = (fc - mean).abs() * c(WGK[10]);
    for j in 0..10 {
        res_asc = res_asc + ((fv1[j] - mean).abs() + (fv2[j] - mean).abs()) * c(WGK[j]);
    }
    let habs = half.abs();
    let value = res_k * half;
    res_abs = res_abs * habs;
    res_asc = res_asc * habs;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != T::zero() && err != T::zero() {
        let scale = (c::<T>(200.0) * err / res_asc).powf(c(1.5));
        err = res_asc * scale.min(T::one());
    }
    let floor = T::min_positive_value() / (c::<T>(50.0) * T::epsilon());
    if res_abs > floor {
        err = err.max(c::<T>(50.0) * T::epsilon() * res_abs);
    }
    if !value.is_finite() {
        err = T::infinity();
    }
    Panel { a, b, value, error: err }
}

/// Adaptive integration of `f` over the partition given by `points`
/// (at least two, increasing).
pub fn integrate<T, F>(mut f: F, points: &[T], spec: &QuadSpec<T>) -> QuadResult<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let mut heap: BinaryHeap<ByError<T>> = BinaryHeap::with_capacity(points.len() + 64);
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(ByError(gk21(&mut f, w[0], w[1])));
        }
    }
    let mut evals = 21 * heap.len();
    if heap.is_empty() {
        return QuadResult { value: T::zero(), error: T::zero(), evaluations: 0, converged: true };
    }
    let max_panels = spec.max_intervals.max(heap.len() + spec.max_intervals / 2);
    let (mut value, mut error) = totals(heap.iter().map(|p| &p.0));
    loop {
        if !value.is_finite() {
            return QuadResult { value, error: T::infinity(), evaluations: evals, converged: false };
        }
        if error <= spec.target(value) {
            // running sums drift; confirm with a fresh total
            let (v, e) = totals(heap.iter().map(|p| &p.0));
            value = v;
            error = e;
            if error <= spec.target(value) {
                return QuadResult { value, error, evaluations: evals, converged: true };
            }
        }
        if heap.len() >= max_panels {
            return QuadResult { value, error, evaluations: evals, converged: false };
        }
        let p = heap.pop().expect("non-empty").0;
        let mid = (p.a + p.b) / c(2.0);
        if !(mid > p.a && mid < p.b) {
            // interval too small to split further
            return QuadResult { value, error, evaluations: evals, converged: false };
        }
        let l = gk21(&mut f, p.a, mid);
        let r = gk21(&mut f, mid, p.b);
        value = value - p.value + l.value + r.value;
        error = error - p.error + l.error + r.error;
        if error < T::zero() {
            error = totals(heap.iter().map(|p| &p.0)).1 + l.error + r.error;
        }
        heap.push(ByError(l));
        heap.push(ByError(r));
        evals += 42;
    }
}

struct ByError<T>(Panel<T>);

impl<T: Scalar> PartialEq for ByError<T> {
    fn eq(&self, other: &Self) -> bool {
        self.0.error == other.0.error
    }
}

impl<T: Scalar> Eq for ByError<T> {}

impl<T: Scalar> PartialOrd for ByError<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for ByError<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // NaN errors sort first so they get split (and flagged) early
        match (self.0.error.is_nan(), other.0.error.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => self.0.error.partial_cmp(&other.0.error).unwrap(),
        }
    }
}

fn totals<'a, T: Scalar>(panels: impl Iterator<Item = &'a Panel<T>>) -> (T, T) {
    // compensated sum of panel values
    let mut v = T::zero();
    let mut comp = T::zero();
    let mut e = T::zero();
    for p in panels {
        let y = p.value - comp;
        let t = v + y;
        comp = (t - v) - y;
        v = t;
        e = e + p.error;
    }
    (v, e)
}

/// ∫_a^b f over one interval.
pub fn integrate_interval<T: Scalar, F: FnMut(T) -> T>(f: F, a: T, b: T, spec: &QuadSpec<T>) -> QuadResult<T> {
    integrate(f, &[a, b], spec)
}

/// ∫_0^b r^q h(r) dr for q > −1 with h smooth, via r = s^{1/(q+1)}.
pub fn integrate_power_origin<T, F>(h: F, q: T, b: T, spec: &QuadSpec<T>) -> QuadResult<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    integrate_power_origin_with(h, q, b, &[], spec)
}

/// As [`integrate_power_origin`] with extra breakpoints given in r.
pub fn integrate_power_origin_with<T, F>(mut h: F, q: T, b: T, breaks: &[T], spec: &QuadSpec<T>) -> QuadResult<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let p1 = q + T::one();
    let upper = b.powf(p1);
    let inv = T::one() / p1;
    let mut pts = vec![T::zero(), upper];
    pts.extend(breaks.iter().filter(|&&r| r > T::zero() && r < b).map(|&r| r.powf(p1)));
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    integrate(
        |s: T| {
            if s <= T::zero() {
                return h(T::zero()) * inv;
            }
            h(s.powf(inv)) * inv
        },
        &pts,
        spec,
    )
}

/// ∫_a^∞ f(r) dr for a > 0, for integrands decaying roughly like r^{−1−p}.
/// Uses r = a·s^{−1/p}, which maps the tail onto (0, 1].
pub fn integrate_tail<T, F>(mut f: F, a: T, p: T, spec: &QuadSpec<T>) -> QuadResult<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let inv = T::one() / p;
    let pts = [T::zero(), c(1e-6), c(1e-3), c(0.05), c(0.3), T::one()];
    integrate(
        |s: T| {
            if s <= T::zero() {
                return T::zero();
            }
            let r = a * s.powf(-inv);
            if !r.is_finite() {
                return T::zero();
            }
            let jac = a * inv * s.powf(-inv - T::one());
            let v = f(r) * jac;
            if v.is_finite() { v } else { T::zero() }
        },
        &pts,
        spec,
    )
}

/// Outcome of a dyadic tail scan of a nonnegative integrand.
#[derive(Debug, Clone, PartialEq)]
pub enum TailVerdict {
    /// Tail summed (or extrapolated) to a finite value.
    Convergent { value: f64, shells: usize, extrapolated: bool },
    /// Shell increments do not decay.
    Divergent { ratio: f64, shells: usize },
    /// The scan could not decide either way.
    Undecidable { shells: usize, reason: String },
}

/// Integrates a nonnegative `f` over [r0, ∞) shell by shell on [r0·2^{k−1}, r0·2^k].
/// The sum stops once a shell adds less than `tail_tol` relative; otherwise a stable
/// ratio of successive shells is used to extrapolate (ratio < 1) or declare
/// divergence (ratio ≥ 1).
pub fn dyadic_tail_scan<F>(mut f: F, r0: f64, max_shells: usize, tail_tol: f64) -> TailVerdict
where
    F: FnMut(f64) -> f64,
{
    let spec = QuadSpec::<f64>::new(0.0, 1e-12);
    let mut total = 0.0;
    let mut incs: Vec<f64> = Vec::with_capacity(max_shells);
    let mut lo = r0;
    for k in 0..max_shells {
        let hi = lo * 2.0;
        let res = integrate(&mut f, &[lo, hi], &spec);
        if !res.value.is_finite() {
            return TailVerdict::Divergent { ratio: f64::INFINITY, shells: k + 1 };
        }
        let inc = res.value;
        total += inc;
        incs.push(inc);
        lo = hi;
        if inc <= tail_tol * total.abs() && k >= 3 {
            return TailVerdict::Convergent { value: total, shells: k + 1, extrapolated: false };
        }
        if total == 0.0 && k >= 8 {
            return TailVerdict::Convergent { value: 0.0, shells: k + 1, extrapolated: false };
        }
        let n = incs.len();
        if n >= 8 && incs[n - 3] > 0.0 {
            let r1 = incs[n - 1] / incs[n - 2];
            let r2 = incs[n - 2] / incs[n - 3];
            let stable = (r1 - r2).abs() <= 1e-4 * r1.abs().max(1e-300);
            if stable {
                if r1 >= 1.0 - 1e-6 {
                    return TailVerdict::Divergent { ratio: r1, shells: n };
                }
                if r1 < 1.0 - 1e-3 {
                    // geometric extrapolation of the remaining shells
                    let rest = inc * r1 / (1.0 - r1);
                    if rest <= 1e-3 * total || n >= 12 {
                        return TailVerdict::Convergent { value: total + rest, shells: n, extrapolated: true };
                    }
                }
            }
        }
    }
    let n = incs.len();
    if n >= 2 && incs[n - 2] > 0.0 && incs[n - 1] / incs[n - 2] >= 1.0 {
        return TailVerdict::Divergent { ratio: incs[n - 1] / incs[n - 2], shells: n };
    }
    TailVerdict::Undecidable { shells: n, reason: "shell increments did not settle".into() }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x: f64| x.powi(5) - 3.0 * x * x, &[0.0, 2.0], &QuadSpec::default());
        assert!(r.converged);
        assert_relative_eq!(r.value, 64.0 / 6.0 - 8.0, max_relative = 1e-13);
    }

    #[test]
    fn endpoint_singularity_via_power_substitution() {
        // ∫_0^1 r^{-1/2} cos r dr
        let r = integrate_power_origin(|r: f64| r.cos(), -0.5, 1.0, &QuadSpec::relative(1e-12));
        assert_relative_eq!(r.value, 1.809_048_475_800_538_6, max_relative = 1e-11);
    }

    #[test]
    fn algebraic_tail() {
        // ∫_1^∞ (1+r^2)^{-1} dr = π/4
        let r = integrate_tail(|r: f64| 1.0 / (1.0 + r * r), 1.0, 1.0, &QuadSpec::relative(1e-11));
        assert_relative_eq!(r.value, std::f64::consts::FRAC_PI_4, max_relative = 1e-10);
    }

    #[test]
    fn scan_detects_convergence_and_divergence() {
        match dyadic_tail_scan(|r| r.powf(-1.2), 1.0, 40, 1e-12) {
            TailVerdict::Convergent { value, .. } => assert_relative_eq!(value, 5.0, max_relative = 1e-6),
            v => panic!("{v:?}"),
        }
        assert!(matches!(dyadic_tail_scan(|r| r.powf(-0.97), 1.0, 40, 1e-12), TailVerdict::Divergent { .. }));
        assert!(matches!(dyadic_tail_scan(|r| 1.0 / r, 1.0, 40, 1e-12), TailVerdict::Divergent { .. }));
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(s, 2.0 / 15.0, max_relative = 1e-13);
    }

    #[test]
    fn generic_over_f32() {
        let r = integrate(|x: f32| x.sin(), &[0.0f32, std::f32::consts::PI], &QuadSpec::new(1e-5, 1e-5));
        assert!((r.value - 2.0).abs() < 1e-5);
    }
}
