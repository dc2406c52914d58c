//! In-place DFTs over a periodic grid (d = 1 or 2), unnormalized forward and
//! 1/N-normalized inverse.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

#[derive(Clone)]
pub struct GridFft {
    n: usize,
    d: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft").field("n", &self.n).field("d", &self.d).finish()
    }
}

impl GridFft {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self { n: grid.n, d: grid.d, fwd: planner.plan_fft_forward(grid.n), inv: planner.plan_fft_inverse(grid.n) }
    }

    fn apply(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(buf.len(), n.pow(self.d as u32), "buffer length does not match the grid");
        plan.process(buf);
        if self.d == 2 {
            let mut col = vec![Complex64::default(); n * n];
            for i in 0..n {
                for j in 0..n {
                    col[j * n + i] = buf[i * n + j];
                }
            }
            plan.process(&mut col);
            for i in 0..n {
                for j in 0..n {
                    buf[i * n + j] = col[j * n + i];
                }
            }
        }
    }

    /// X_k = Σ_m x_m e^{−2πi k·m/n}
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.apply(&self.fwd, buf);
    }

    /// x_m = N^{−1} Σ_k X_k e^{2πi k·m/n}
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.apply(&self.inv, buf);
        let s = 1.0 / buf.len() as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform of a Hermitian spectrum, returning the real part.
    pub fn inverse_real(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_delta() {
        for d in [1, 2] {
            let g = GridSpec::new(d, 1.0, 8, 0.1, 1).unwrap();
            let f = GridFft::new(&g);
            let x: Vec<f64> = (0..g.points()).map(|i| (i as f64 * 0.37).sin()).collect();
            let back = f.inverse_real(&f.forward_real(&x));
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-14);
            }
            let mut delta = vec![0.0; g.points()];
            delta[0] = 1.0;
            for z in f.forward_real(&delta) {
                assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn two_d_matches_direct_sum() {
        let g = GridSpec::new(2, 1.0, 8, 0.1, 1).unwrap();
        let f = GridFft::new(&g);
        let x: Vec<f64> = (0..64).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let got = f.forward_real(&x);
        let (k1, k2) = (3usize, 5usize);
        let mut want = Complex64::default();
        for m1 in 0..8 {
            for m2 in 0..8 {
                let ph = -2.0 * std::f64::consts::PI * ((k1 * m1 + k2 * m2) as f64) / 8.0;
                want += x[m1 * 8 + m2] * Complex64::from_polar(1.0, ph);
            }
        }
        assert!((got[k1 * 8 + k2] - want).norm() < 1e-12);
    }
}
