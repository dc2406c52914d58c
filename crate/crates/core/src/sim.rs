//! Sampling the mild solution on a periodic grid: exact Gaussian synthesis for
//! the additive equation, and the mild-form Walsh recursion / Picard iteration
//! for Lipschitz σ.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::GridFft;
use crate::green::{require_hypothesis, Propagator};
use crate::grid::GridSpec;
use crate::kernels::{dalang_exponent, FracParams, SpectralKernel};
use crate::noise::{spectral_std, NoiseSlab};
use crate::quad::{gauss_legendre, integrate, QuadSpec};

/// Walsh recursion aborts once max |u| exceeds this.
pub const BLOW_UP: f64 = 1e12;

/// Diffusion coefficient σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Constant { c: f64 },
    Linear { l: f64 },
    /// L·u/(1 + ε|u|)
    SaturatingLinear { l: f64, eps: f64 },
    /// Piecewise linear through (xs, ys), constant beyond the end knots.
    Custom {
        xs: Vec<f64>,
        ys: Vec<f64>,
        #[serde(default)]
        lipschitz: Option<f64>,
    },
}

impl SigmaSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("sigma: {name} must be finite")))
            }
        };
        match self {
            SigmaSpec::Constant { c } => finite(*c, "c"),
            SigmaSpec::Linear { l } => finite(*l, "l"),
            SigmaSpec::SaturatingLinear { l, eps } => {
                finite(*l, "l")?;
                if !(*eps >= 0.0 && eps.is_finite()) {
                    return Err(Error::invalid("sigma: eps must be finite and nonnegative"));
                }
                Ok(())
            }
            SigmaSpec::Custom { xs, ys, lipschitz } => {
                if xs.len() < 2 || xs.len() != ys.len() {
                    return Err(Error::invalid("sigma: custom table needs at least two (x, y) knots of equal count"));
                }
                if xs.iter().chain(ys).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("sigma: custom table has non-finite entries"));
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("sigma: custom knots must be strictly increasing"));
                }
                if let Some(l) = lipschitz {
                    if !(*l > 0.0 && l.is_finite()) {
                        return Err(Error::invalid("sigma: declared Lipschitz constant must be positive"));
                    }
                    if !self.verify_lipschitz(*l, 10_000, 0x51_6d_61) {
                        return Err(Error::invalid(format!(
                            "sigma: declared Lipschitz constant {l} is violated by the table"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            SigmaSpec::Constant { c } => *c,
            SigmaSpec::Linear { l } => l * u,
            SigmaSpec::SaturatingLinear { l, eps } => l * u / (1.0 + eps * u.abs()),
            SigmaSpec::Custom { xs, ys, .. } => {
                let n = xs.len();
                if u <= xs[0] {
                    return ys[0];
                }
                if u >= xs[n - 1] {
                    return ys[n - 1];
                }
                let i = xs.partition_point(|&x| x <= u) - 1;
                let w = (u - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + w * (ys[i + 1] - ys[i])
            }
        }
    }

    /// Smallest L_σ with |σ(x) − σ(y)| ≤ L_σ|x − y| and |σ(x)| ≤ L_σ(1 + |x|).
    pub fn lipschitz(&self) -> f64 {
        match self {
            SigmaSpec::Constant { c } => c.abs(),
            SigmaSpec::Linear { l } | SigmaSpec::SaturatingLinear { l, .. } => l.abs(),
            SigmaSpec::Custom { xs, ys, lipschitz } => {
                let slope = xs
                    .windows(2)
                    .zip(ys.windows(2))
                    .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
                    .fold(0.0, f64::max);
                let growth = xs
                    .iter()
                    .copied()
                    .chain(std::iter::once(0.0))
                    .map(|x| self.eval(x).abs() / (1.0 + x.abs()))
                    .fold(0.0, f64::max);
                lipschitz.unwrap_or(0.0).max(slope).max(growth)
            }
        }
    }

    /// Samples `pairs` random pairs over the knot range (padded) and checks
    /// the Lipschitz inequality at constant `l`.
    pub fn verify_lipschitz(&self, l: f64, pairs: usize, seed: u64) -> bool {
        let (lo, hi) = match self {
            SigmaSpec::Custom { xs, .. } => {
                let pad = 0.25 * (xs[xs.len() - 1] - xs[0]) + 1.0;
                (xs[0] - pad, xs[xs.len() - 1] + pad)
            }
            _ => (-100.0, 100.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..pairs).all(|_| {
            let x = rng.random_range(lo..hi);
            let y = rng.random_range(lo..hi);
            (self.eval(x) - self.eval(y)).abs() <= l * (x - y).abs() * (1.0 + 1e-12) + 1e-15
        })
    }
}

/// Deterministic, bounded, nonnegative initial datum u₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Zero,
    Constant { value: f64 },
    /// Samples on the grid, row-major.
    Tabulated { values: Vec<f64> },
}

impl InitialCondition {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        match self {
            InitialCondition::Zero => Ok(()),
            InitialCondition::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::invalid("u0: constant must be finite and nonnegative"));
                }
                Ok(())
            }
            InitialCondition::Tabulated { values } => {
                if values.len() != grid.points() {
                    return Err(Error::invalid(format!(
                        "u0: {} samples given, grid has {}",
                        values.len(),
                        grid.points()
                    )));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("u0: samples must be finite and nonnegative"));
                }
                Ok(())
            }
        }
    }

    pub fn samples(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        self.validate(grid)?;
        Ok(match self {
            InitialCondition::Zero => vec![0.0; grid.points()],
            InitialCondition::Constant { value } => vec![*value; grid.points()],
            InitialCondition::Tabulated { values } => values.clone(),
        })
    }

    /// The value when u₀ is spatially constant.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            InitialCondition::Zero => Some(0.0),
            InitialCondition::Constant { value } => Some(*value),
            InitialCondition::Tabulated { values } => {
                let v0 = *values.first()?;
                values.iter().all(|&v| v == v0).then_some(v0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AdditiveExact,
    WalshRecursion,
    PicardIterate(usize),
}

/// Sampled u(t_m, x_i), m = 0..=nt, shape (nt+1, n^d).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    pub grid: GridSpec,
    pub params: FracParams<f64>,
    pub provenance: Provenance,
}

impl Field {
    fn new(values: Vec<f64>, grid: GridSpec, params: FracParams<f64>, provenance: Provenance) -> Result<Self> {
        debug_assert_eq!(values.len(), (grid.nt + 1) * grid.points());
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let n = grid.points();
            return Err(Error::numeric(format!("non-finite field value at step {}, site {}", i / n, i % n)));
        }
        Ok(Self { values, grid, params, provenance })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        let n = self.grid.points();
        &self.values[m * n..(m + 1) * n]
    }

    pub fn at(&self, m: usize, idx: usize) -> f64 {
        self.values[m * self.grid.points() + idx]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// base + scale·u, with `base` laid out like `values()`.
    pub fn affine(&self, base: &[f64], scale: f64) -> Result<Field> {
        if base.len() != self.values.len() {
            return Err(Error::invalid("affine: base has the wrong length"));
        }
        let v = self.values.iter().zip(base).map(|(u, b)| b + scale * u).collect();
        Field::new(v, self.grid, self.params, self.provenance)
    }

    /// Little-endian bytes of all values, for hashing and comparison.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

fn check_setup(grid: &GridSpec, params: &FracParams<f64>, kernel: &SpectralKernel<f64>) -> Result<()> {
    grid.validate()?;
    params.validate()?;
    kernel.validate()?;
    if params.d != grid.d || kernel.d != grid.d {
        return Err(Error::invalid(format!(
            "dimension mismatch: grid {}, params {}, kernel {}",
            grid.d, params.d, kernel.d
        )));
    }
    require_hypothesis(kernel, dalang_exponent(params), "hypothesis 1")
}

/// Integer |k|² per flat index, the key on which the symbol depends.
fn class_key(grid: &GridSpec, idx: usize) -> u64 {
    let sq = |i: usize| {
        let k = grid.wavenumber(i);
        (k * k) as u64
    };
    match grid.d {
        1 => sq(idx),
        _ => sq(idx / grid.n) + sq(idx % grid.n),
    }
}

/// Symbol S(|ξ|) for a class key.
fn class_symbol(grid: &GridSpec, params: &FracParams<f64>, key: u64) -> f64 {
    let r = std::f64::consts::PI / grid.half_width * (key as f64).sqrt();
    params.symbol(r)
}

/// Index classes with equal |ξ|: returns (class per index, symbol per class).
fn classes(grid: &GridSpec, params: &FracParams<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut map = BTreeMap::new();
    let class_of = (0..grid.points())
        .map(|idx| {
            let key = class_key(grid, idx);
            let next = map.len();
            *map.entry(key).or_insert(next)
        })
        .collect();
    let mut symbols = vec![0.0; map.len()];
    for (&key, &c) in &map {
        symbols[c] = class_symbol(grid, params, key);
    }
    (class_of, symbols)
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Exact time covariance of one Fourier mode, C_ab = ∫_0^{min} e(t_a−s)e(t_b−s)ds
/// for a, b = 1..=nt, with e(u) = E_β(−S u^β). Returned packed lower triangular.
fn time_covariance(prop: &Propagator, s: f64, dt: f64, nt: usize, gl: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let beta = prop.params().beta;
    let e = |u: f64| prop.e(s * u.powf(beta));
    let (xg, wg) = gl;
    let q = xg.len();
    // tab[k][i] = e(k·dt + v_i) at Gauss nodes v_i in [0, dt]
    let nodes: Vec<f64> = xg.iter().map(|x| 0.5 * dt * (x + 1.0)).collect();
    let tab: Vec<f64> = (0..2 * nt).flat_map(|k| nodes.iter().map(move |v| (k, *v))).map(|(k, v)| e(k as f64 * dt + v)).collect();
    // c[l][m] = ∫_0^dt e((l+m)dt + v)e(m dt + v)dv
    let mut cl = vec![0.0; nt * nt];
    let spec = QuadSpec::new(1e-16 * dt, 1e-12);
    for l in 0..nt {
        cl[l * nt] = integrate(|v: f64| e(l as f64 * dt + v) * e(v), &[0.0, dt], &spec).value;
        for m in 1..nt - l {
            let a = &tab[(l + m) * q..(l + m + 1) * q];
            let b = &tab[m * q..(m + 1) * q];
            cl[l * nt + m] = 0.5 * dt * (0..q).map(|i| wg[i] * a[i] * b[i]).sum::<f64>();
        }
    }
    let mut c = vec![0.0; nt * (nt + 1) / 2];
    for a in 1..=nt {
        for b in 1..=a {
            let l = a - b;
            c[packed(a - 1, b - 1)] = cl[l * nt..l * nt + b].iter().sum();
        }
    }
    c
}

/// In-place lower Cholesky of a packed PSD matrix; columns whose pivot falls
/// below `tiny` relative to the largest diagonal are zeroed.
fn cholesky_psd(a: &mut [f64], n: usize) {
    let max_diag = (0..n).map(|i| a[packed(i, i)]).fold(0.0, f64::max);
    let tiny = 1e-13 * max_diag;
    for j in 0..n {
        let mut d = a[packed(j, j)];
        for k in 0..j {
            d -= a[packed(j, k)] * a[packed(j, k)];
        }
        if d <= tiny {
            for i in j..n {
                a[packed(i, j)] = 0.0;
            }
            continue;
        }
        let dj = d.sqrt();
        a[packed(j, j)] = dj;
        for i in j + 1..n {
            let mut s = a[packed(i, j)];
            for k in 0..j {
                s -= a[packed(i, k)] * a[packed(j, k)];
            }
            a[packed(i, j)] = s / dj;
        }
    }
}

/// Exact sampler for U(t,x) = ∫_0^t∫G_{t−s}(x−y)W(ds,dy) on a grid.
///
/// Each Fourier mode is a Gaussian vector over the saved times with the exact
/// covariance; it is drawn by a lower Cholesky factor applied to the
/// standardized increments of a [`NoiseSlab`], so U at t_m depends on the
/// first m noise slices only.
#[derive(Debug, Clone)]
pub struct AdditiveSampler {
    grid: GridSpec,
    params: FracParams<f64>,
    kernel: SpectralKernel<f64>,
    std: Vec<f64>,
    class_of: Vec<usize>,
    factors: Vec<Vec<f64>>,
    fft: GridFft,
}

impl AdditiveSampler {
    pub fn new(grid: &GridSpec, params: &FracParams<f64>, kernel: &SpectralKernel<f64>) -> Result<Self> {
        check_setup(grid, params, kernel)?;
        let std = spectral_std(grid, kernel)?;
        let (class_of, symbols) = classes(grid, params);
        let prop = Propagator::tabulated_kernel(params)?;
        let gl = gauss_legendre(16);
        let mut used = vec![false; symbols.len()];
        for (idx, &c) in class_of.iter().enumerate() {
            used[c] |= std[idx] > 0.0;
        }
        let factors = symbols
            .iter()
            .zip(&used)
            .map(|(&s, &u)| {
                if !u {
                    return Vec::new();
                }
                let mut c = time_covariance(&prop, s, grid.dt, grid.nt, &gl);
                cholesky_psd(&mut c, grid.nt);
                c
            })
            .collect();
        Ok(Self { grid: *grid, params: *params, kernel: kernel.clone(), std, class_of, factors, fft: GridFft::new(grid) })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &FracParams<f64> {
        &self.params
    }

    pub fn kernel(&self) -> &SpectralKernel<f64> {
        &self.kernel
    }

    pub fn spectral_std(&self) -> &[f64] {
        &self.std
    }

    pub fn noise(&self, seed: u64, replica: u64) -> NoiseSlab {
        crate::noise::synthesize_with_std(&self.grid, &self.kernel, &self.std, seed, replica)
    }

    pub fn sample(&self, seed: u64, replica: u64) -> Result<Field> {
        self.sample_with_noise(&self.noise(seed, replica))
    }

    /// U driven by the given noise slab (which must match grid and kernel).
    pub fn sample_with_noise(&self, noise: &NoiseSlab) -> Result<Field> {
        if noise.grid != self.grid || noise.kernel != self.kernel {
            return Err(Error::invalid("noise slab grid or kernel does not match the sampler"));
        }
        let n = self.grid.points();
        let nt = self.grid.nt;
        let inv_sdt = 1.0 / self.grid.dt.sqrt();
        let mut spec = vec![Complex64::default(); (nt + 1) * n];
        for idx in 0..n {
            let cj = self.grid.conjugate_index(idx);
            if cj < idx || self.std[idx] == 0.0 {
                continue;
            }
            let l = &self.factors[self.class_of[idx]];
            for i in 0..nt {
                let row = &l[packed(i, 0)..=packed(i, i)];
                let mut acc = Complex64::default();
                for (j, &lij) in row.iter().enumerate() {
                    acc += noise.slice(j)[idx] * lij;
                }
                spec[(i + 1) * n + idx] = acc * inv_sdt;
            }
            if cj != idx {
                for m in 1..=nt {
                    spec[m * n + cj] = spec[m * n + idx].conj();
                }
            }
        }
        let mut values = vec![0.0; (nt + 1) * n];
        for m in 1..=nt {
            let row = &mut spec[m * n..(m + 1) * n];
            self.fft.inverse(row);
            for (v, z) in values[m * n..(m + 1) * n].iter_mut().zip(row.iter()) {
                *v = z.re;
            }
        }
        Field::new(values, self.grid, self.params, Provenance::AdditiveExact)
    }

    fn cov(&self, class: usize, a: usize, b: usize) -> f64 {
        if a == 0 || b == 0 {
            return 0.0;
        }
        let (a, b) = if a >= b { (a - 1, b - 1) } else { (b - 1, a - 1) };
        let l = &self.factors[class];
        (0..=b).map(|k| l[packed(a, k)] * l[packed(b, k)]).sum()
    }

    fn grid_sum(&self, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let n = self.grid.points() as f64;
        let s: f64 = (0..self.grid.points())
            .filter(|&idx| self.std[idx] > 0.0)
            .map(|idx| self.std[idx] * self.std[idx] * f(idx, self.class_of[idx]))
            .sum();
        s / (n * n)
    }

    /// E[U(t_a,x)U(t_b,x + r)] on the grid, r = `shift` cells along the first axis.
    pub fn grid_covariance(&self, a: usize, b: usize, shift: usize) -> f64 {
        let dx = self.grid.dx();
        self.grid_sum(|idx, c| {
            let xi = self.grid.frequency_vec(idx)[0];
            self.cov(c, a, b) * (xi * shift as f64 * dx).cos()
        })
    }

    /// E|U(t_a,x) − U(t_b,x)|² on the grid.
    pub fn grid_time_increment(&self, a: usize, b: usize) -> f64 {
        self.grid_sum(|_, c| self.cov(c, a, a) + self.cov(c, b, b) - 2.0 * self.cov(c, a, b))
    }

    /// E|U(t_m,x + r) − U(t_m,x)|² on the grid, r = `shift` cells along the first axis.
    pub fn grid_space_increment(&self, m: usize, shift: usize) -> f64 {
        let dx = self.grid.dx();
        self.grid_sum(|idx, c| {
            let xi = self.grid.frequency_vec(idx)[0];
            2.0 * self.cov(c, m, m) * (1.0 - (xi * shift as f64 * dx).cos())
        })
    }
}

pub fn sample_additive(
    grid: &GridSpec,
    params: &FracParams<f64>,
    kernel: &SpectralKernel<f64>,
    seed: u64,
) -> Result<Field> {
    AdditiveSampler::new(grid, params, kernel)?.sample(seed, 0)
}

/// (𝒢u₀)_{t_m} for m = 0..=nt, flattened (nt+1, n^d).
pub fn smoothed_initial(grid: &GridSpec, params: &FracParams<f64>, u0: &InitialCondition) -> Result<Vec<f64>> {
    grid.validate()?;
    params.validate()?;
    let samples = u0.samples(grid)?;
    let n = grid.points();
    let mut out = vec![0.0; (grid.nt + 1) * n];
    out[..n].copy_from_slice(&samples);
    if let Some(c) = u0.constant_value() {
        out.iter_mut().for_each(|v| *v = c);
        return Ok(out);
    }
    let fft = GridFft::new(grid);
    let prop = Propagator::tabulated_kernel(params)?;
    let (class_of, symbols) = classes(grid, params);
    let spec = fft.forward_real(&samples);
    let mut buf = vec![Complex64::default(); n];
    for m in 1..=grid.nt {
        let tb = grid.time(m).powf(params.beta);
        let mult: Vec<f64> = symbols.iter().map(|s| prop.e(s * tb)).collect();
        for idx in 0..n {
            buf[idx] = spec[idx] * mult[class_of[idx]];
        }
        fft.inverse(&mut buf);
        for (v, z) in out[m * n..(m + 1) * n].iter_mut().zip(&buf) {
            *v = z.re;
        }
    }
    Ok(out)
}

/// Lag used for the kernel weight of the noise slice j at step m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// t_m − t_j − dt/2
    #[default]
    Midpoint,
    /// t_m − t_j
    LeftEndpoint,
}

/// Shared state for Walsh recursion and Picard iteration.
#[derive(Debug, Clone)]
pub struct MildSolver {
    grid: GridSpec,
    params: FracParams<f64>,
    kernel: SpectralKernel<f64>,
    sigma: SigmaSpec,
    smooth: Vec<f64>,
    /// weights[(l−1)·N + idx] = ℱG at lag l for mode idx, l = 1..=nt
    weights: Vec<f64>,
    fft: GridFft,
}

impl MildSolver {
    pub fn new(
        grid: &GridSpec,
        params: &FracParams<f64>,
        kernel: &SpectralKernel<f64>,
        sigma: &SigmaSpec,
        u0: &InitialCondition,
        rule: StepRule,
    ) -> Result<Self> {
        check_setup(grid, params, kernel)?;
        sigma.validate()?;
        let smooth = smoothed_initial(grid, params, u0)?;
        let prop = Propagator::tabulated_kernel(params)?;
        let (class_of, symbols) = classes(grid, params);
        let n = grid.points();
        let mut weights = vec![0.0; grid.nt * n];
        for l in 1..=grid.nt {
            let lag = match rule {
                StepRule::Midpoint => (l as f64 - 0.5) * grid.dt,
                StepRule::LeftEndpoint => l as f64 * grid.dt,
            };
            let tb = lag.powf(params.beta);
            let w: Vec<f64> = symbols.iter().map(|s| prop.e(s * tb)).collect();
            for idx in 0..n {
                weights[(l - 1) * n + idx] = w[class_of[idx]];
            }
        }
        Ok(Self {
            grid: *grid,
            params: *params,
            kernel: kernel.clone(),
            sigma: sigma.clone(),
            smooth,
            weights,
            fft: GridFft::new(grid),
        })
    }

    pub fn smooth(&self) -> &[f64] {
        &self.smooth
    }

    fn check_noise(&self, noise: &NoiseSlab) -> Result<()> {
        if noise.grid != self.grid || noise.kernel != self.kernel {
            return Err(Error::invalid("noise slab grid or kernel does not match the solver"));
        }
        Ok(())
    }

    /// ℱ(σ(v)·ΔW_j)
    fn forcing(&self, v: &[f64], noise: &NoiseSlab, j: usize, buf: &mut [Complex64]) {
        buf.copy_from_slice(noise.slice(j));
        self.fft.inverse(buf);
        for (z, &u) in buf.iter_mut().zip(v) {
            *z = Complex64::new(self.sigma.eval(u) * z.re, 0.0);
        }
        self.fft.forward(buf);
    }

    /// Runs the recursion; σ is evaluated on `driver` when given (Picard),
    /// otherwise on the solution being built (Walsh).
    fn run(&self, noise: &NoiseSlab, driver: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_noise(noise)?;
        let n = self.grid.points();
        let nt = self.grid.nt;
        let lambda = self.params.lambda;
        let mut u = self.smooth.clone();
        let mut hist = vec![Complex64::default(); nt * n];
        let mut acc = vec![Complex64::default(); n];
        for m in 1..=nt {
            let j = m - 1;
            let src = match driver {
                Some(d) => &d[j * n..(j + 1) * n],
                None => &u[j * n..(j + 1) * n],
            };
            let mut h = vec![Complex64::default(); n];
            self.forcing(src, noise, j, &mut h);
            hist[j * n..(j + 1) * n].copy_from_slice(&h);
            acc.iter_mut().for_each(|z| *z = Complex64::default());
            for j in 0..m {
                let w = &self.weights[(m - j - 1) * n..(m - j) * n];
                let hj = &hist[j * n..(j + 1) * n];
                for ((a, &wk), &hk) in acc.iter_mut().zip(w).zip(hj) {
                    *a += hk * wk;
                }
            }
            self.fft.inverse(&mut acc);
            let mut max_abs: f64 = 0.0;
            for (v, z) in u[m * n..(m + 1) * n].iter_mut().zip(&acc) {
                *v += lambda * z.re;
                max_abs = max_abs.max(v.abs());
            }
            if !(max_abs <= BLOW_UP) {
                return Err(Error::MomentBlowUp { step: m, max_abs });
            }
        }
        Ok(u)
    }

    pub fn walsh(&self, noise: &NoiseSlab) -> Result<Field> {
        let u = self.run(noise, None)?;
        Field::new(u, self.grid, self.params, Provenance::WalshRecursion)
    }

    /// Picard iteration from u⁽⁰⁾ = 𝒢u₀ over a batch of slabs sharing the map.
    pub fn picard(&self, noise: &[NoiseSlab], k_max: usize, tol: f64) -> Result<PicardOutcome> {
        if noise.is_empty() {
            return Err(Error::invalid("picard: empty noise batch"));
        }
        if k_max == 0 || !(tol >= 0.0) {
            return Err(Error::invalid("picard: need k_max >= 1 and tol >= 0"));
        }
        let mut current: Vec<Vec<f64>> = vec![self.smooth.clone(); noise.len()];
        let mut deltas = Vec::with_capacity(k_max);
        let mut rising = 0;
        let mut k = 0;
        while k < k_max {
            let next: Vec<Vec<f64>> = noise.iter().zip(&current).map(|(w, u)| self.run(w, Some(u))).collect::<Result<_>>()?;
            let delta = sup_mean_sq_diff(&next, &current);
            current = next;
            k += 1;
            if let Some(&prev) = deltas.last() {
                if delta > 0.0 && delta >= prev {
                    rising += 1;
                } else {
                    rising = 0;
                }
            }
            deltas.push(delta);
            if delta < tol {
                break;
            }
            if rising >= 3 {
                return Err(Error::NonContraction(rising));
            }
        }
        let fields = current
            .into_iter()
            .map(|u| Field::new(u, self.grid, self.params, Provenance::PicardIterate(k)))
            .collect::<Result<_>>()?;
        Ok(PicardOutcome { fields, iterates_delta: deltas, iterations: k })
    }
}

/// sup over (t, x) of the batch mean of |a − b|².
fn sup_mean_sq_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let len = a[0].len();
    let r = a.len() as f64;
    (0..len)
        .map(|i| a.iter().zip(b).map(|(x, y)| (x[i] - y[i]).powi(2)).sum::<f64>() / r)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    /// Final iterate per slab.
    pub fields: Vec<Field>,
    /// iterates_delta[n] = sup_{t,x} mean |u⁽ⁿ⁺¹⁾ − u⁽ⁿ⁾|²
    pub iterates_delta: Vec<f64>,
    pub iterations: usize,
}

pub fn walsh_recursion(
    grid: &GridSpec,
    params: &FracParams<f64>,
    kernel: &SpectralKernel<f64>,
    sigma: &SigmaSpec,
    u0: &InitialCondition,
    noise: &NoiseSlab,
) -> Result<Field> {
    MildSolver::new(grid, params, kernel, sigma, u0, StepRule::Midpoint)?.walsh(noise)
}

#[allow(clippy::too_many_arguments)]
pub fn picard_iterate(
    grid: &GridSpec,
    params: &FracParams<f64>,
    kernel: &SpectralKernel<f64>,
    sigma: &SigmaSpec,
    u0: &InitialCondition,
    noise: &[NoiseSlab],
    k_max: usize,
    tol: f64,
) -> Result<PicardOutcome> {
    MildSolver::new(grid, params, kernel, sigma, u0, StepRule::Midpoint)?.picard(noise, k_max, tol)
}

/// Exact E|u_m(x)|², m = 0..=nt, of the Walsh recursion for constant u₀ and
/// σ Constant or Linear, where the law is stationary in x and the second
/// moment obeys a closed linear recursion:
/// K_m = u₀² + λ²dt Σ_{j<m} IDFT(w_{m−j}²·DFT(E[σσ']_j · c)), c the noise covariance.
pub fn second_moment_recursion(
    grid: &GridSpec,
    params: &FracParams<f64>,
    kernel: &SpectralKernel<f64>,
    sigma: &SigmaSpec,
    u0: &InitialCondition,
    rule: StepRule,
) -> Result<Vec<f64>> {
    let m0 = u0
        .constant_value()
        .ok_or_else(|| Error::invalid("second-moment recursion needs a spatially constant u0"))?;
    let (lin, cst) = match sigma {
        SigmaSpec::Linear { l } => (*l, 0.0),
        SigmaSpec::Constant { c } => (0.0, *c),
        _ => return Err(Error::invalid("second-moment recursion needs sigma Constant or Linear")),
    };
    let solver = MildSolver::new(grid, params, kernel, sigma, u0, rule)?;
    let std = spectral_std(grid, kernel)?;
    let n = grid.points();
    let nt = grid.nt;
    let fft = &solver.fft;
    // E[ΔW(x)ΔW(x+r)] = dt·cn(r)
    let q: Vec<Complex64> = std.iter().map(|s| Complex64::new(s * s / n as f64, 0.0)).collect();
    let cn = fft.inverse_real(&q);
    let lam2 = params.lambda * params.lambda;
    let mut k_hist: Vec<Vec<f64>> = vec![vec![m0 * m0; n]];
    let mut g_hat: Vec<Vec<Complex64>> = Vec::with_capacity(nt);
    let mut out = vec![m0 * m0];
    let mut acc = vec![Complex64::default(); n];
    for m in 1..=nt {
        let kj = &k_hist[m - 1];
        let g: Vec<f64> = kj.iter().zip(&cn).map(|(k, c)| (lin * lin * k + cst * cst) * c).collect();
        g_hat.push(fft.forward_real(&g));
        acc.iter_mut().for_each(|z| *z = Complex64::default());
        for (j, gj) in g_hat.iter().enumerate() {
            let w = &solver.weights[(m - j - 1) * n..(m - j) * n];
            for ((a, &wk), &gk) in acc.iter_mut().zip(w).zip(gj) {
                *a += gk * (wk * wk);
            }
        }
        let km: Vec<f64> = fft.inverse_real(&acc).into_iter().map(|v| m0 * m0 + lam2 * grid.dt * v).collect();
        if !(km[0].is_finite() && km[0] <= BLOW_UP * BLOW_UP) {
            return Err(Error::MomentBlowUp { step: m, max_abs: km[0].abs().sqrt() });
        }
        out.push(km[0]);
        k_hist.push(km);
    }
    Ok(out)
}
