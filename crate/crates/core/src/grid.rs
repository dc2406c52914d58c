//! Periodic space-time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid on the torus [−L, L)^d with n points per axis and nt time steps of size dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub half_width: f64,
    pub n: usize,
    pub dt: f64,
    pub nt: usize,
}

impl GridSpec {
    pub fn new(d: usize, half_width: f64, n: usize, dt: f64, nt: usize) -> Result<Self> {
        let g = Self { d, half_width, n, dt, nt };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d == 1 || self.d == 2) {
            return Err(Error::invalid("grids support d = 1 or d = 2"));
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::invalid(format!("n must be a power of two >= 8, got {}", self.n)));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::invalid("half_width must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.nt == 0 {
            return Err(Error::invalid("nt must be at least 1"));
        }
        Ok(())
    }

    /// Total number of spatial points n^d.
    pub fn points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Cell volume Δv = dx^d.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Domain volume V = (2L)^d.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.d as i32)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.nt as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        self.dt * m as f64
    }

    /// Coordinate of grid index i along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + self.dx() * i as f64
    }

    /// Signed FFT wavenumber index for position i along one axis.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 { i } else { i - n }
    }

    /// Angular frequency ξ = πk/L along one axis.
    pub fn frequency(&self, i: usize) -> f64 {
        std::f64::consts::PI * self.wavenumber(i) as f64 / self.half_width
    }

    /// Frequency vector of flat spectral index `idx` (row-major, last axis fastest).
    pub fn frequency_vec(&self, idx: usize) -> [f64; 2] {
        match self.d {
            1 => [self.frequency(idx), 0.0],
            _ => [self.frequency(idx / self.n), self.frequency(idx % self.n)],
        }
    }

    pub fn frequency_norm(&self, idx: usize) -> f64 {
        let v = self.frequency_vec(idx);
        (v[0] * v[0] + v[1] * v[1]).sqrt()
    }

    /// Flat index of −ξ for flat index `idx`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let neg = |i: usize| (self.n - i) % self.n;
        match self.d {
            1 => neg(idx),
            _ => neg(idx / self.n) * self.n + neg(idx % self.n),
        }
    }

    /// Largest |ξ| along an axis (Nyquist).
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * (self.n / 2) as f64 / self.half_width
    }
}
