//! Discrete realizations of a Gaussian noise that is white in time and
//! spatially homogeneous with spectral measure μ, on a periodic grid.
//!
//! Spectral increments satisfy E|ΔŴ_j(ξ_k)|² = N·dt·μ(ξ_k)/Δv for the
//! unnormalized forward DFT (see docs/NORMALIZATION.md).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::GridFft;
pub use crate::grid::GridSpec;
use crate::kernels::{KernelKind, SpectralKernel};

const MAGIC: &[u8; 8] = b"FRSKNOIS";
const DUMP_VERSION: u32 = 1;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one (seed, replica, slice) triple, independent of the
/// order in which triples are visited.
pub fn slice_rng(seed: u64, replica: u64, slice: u64) -> ChaCha8Rng {
    let k = splitmix64(splitmix64(splitmix64(seed) ^ replica) ^ slice.wrapping_add(0x5851_F42D_4C95_7F2D));
    ChaCha8Rng::seed_from_u64(k)
}

/// Hermitian array of standard complex normals: E|Z_k|² = 1, Z_{−k} = conj(Z_k),
/// real at self-conjugate indices.
pub fn hermitian_normals(grid: &GridSpec, rng: &mut impl Rng, out: &mut [Complex64]) {
    let n = grid.points();
    debug_assert_eq!(out.len(), n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for idx in 0..n {
        let cj = grid.conjugate_index(idx);
        if cj == idx {
            out[idx] = Complex64::new(rng.sample(StandardNormal), 0.0);
        } else if idx < cj {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            out[idx] = Complex64::new(a * s, b * s);
            out[cj] = Complex64::new(a * s, -b * s);
        }
    }
}

/// √(N·μ(ξ_k)/Δv) per flat spectral index; zero on modes that are removed
/// (the origin for Riesz and fractional-product kernels, and the coordinate
/// axes for the fractional product in d = 2).
pub fn spectral_std(grid: &GridSpec, kernel: &SpectralKernel<f64>) -> Result<Vec<f64>> {
    grid.validate()?;
    kernel.validate()?;
    if kernel.d != grid.d {
        return Err(Error::invalid(format!("kernel dimension {} differs from grid dimension {}", kernel.d, grid.d)));
    }
    if matches!(kernel.kind, KernelKind::White) && grid.d != 1 {
        return Err(Error::invalid("white noise is only supported in d = 1"));
    }
    let n_pts = grid.points() as f64;
    let dv = grid.cell_volume();
    let fp = matches!(kernel.kind, KernelKind::FractionalProduct { .. });
    (0..grid.points())
        .map(|idx| {
            let v = grid.frequency_vec(idx);
            let xi = &v[..grid.d];
            let on_axis = xi.contains(&0.0);
            let at_origin = xi.iter().all(|&x| x == 0.0);
            if (at_origin && kernel.singular_at_origin()) || (fp && on_axis) {
                return Ok(0.0);
            }
            let dens = kernel.density(xi)?;
            if !(dens.is_finite() && dens >= 0.0) {
                return Err(Error::invalid(format!("kernel density is not finite at grid frequency {xi:?}")));
            }
            Ok((n_pts * dens / dv).sqrt())
        })
        .collect()
}

/// Spectral noise increments for one replica, shape (nt, n^d), row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSlab {
    pub grid: GridSpec,
    pub kernel: SpectralKernel<f64>,
    pub seed: u64,
    pub replica: u64,
    increments: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    grid: GridSpec,
    kernel_tag: String,
    kernel: SpectralKernel<f64>,
    seed: u64,
    replica: u64,
}

pub fn synthesize(grid: &GridSpec, kernel: &SpectralKernel<f64>, seed: u64) -> Result<NoiseSlab> {
    synthesize_replica(grid, kernel, seed, 0)
}

pub fn synthesize_replica(grid: &GridSpec, kernel: &SpectralKernel<f64>, seed: u64, replica: u64) -> Result<NoiseSlab> {
    let std = spectral_std(grid, kernel)?;
    Ok(synthesize_with_std(grid, kernel, &std, seed, replica))
}

/// As [`synthesize_replica`] with precomputed [`spectral_std`].
pub fn synthesize_with_std(
    grid: &GridSpec,
    kernel: &SpectralKernel<f64>,
    std: &[f64],
    seed: u64,
    replica: u64,
) -> NoiseSlab {
    let n = grid.points();
    let sdt = grid.dt.sqrt();
    let mut increments = vec![Complex64::default(); grid.nt * n];
    for (j, slice) in increments.chunks_mut(n).enumerate() {
        let mut rng = slice_rng(seed, replica, j as u64);
        hermitian_normals(grid, &mut rng, slice);
        for (z, &s) in slice.iter_mut().zip(std) {
            *z *= s * sdt;
        }
    }
    NoiseSlab { grid: *grid, kernel: kernel.clone(), seed, replica, increments }
}

impl NoiseSlab {
    pub fn increments(&self) -> &[Complex64] {
        &self.increments
    }

    pub fn slice(&self, j: usize) -> &[Complex64] {
        let n = self.grid.points();
        &self.increments[j * n..(j + 1) * n]
    }

    /// Physical-space increment field of slice j.
    pub fn physical_slice(&self, j: usize, fft: &GridFft) -> Vec<f64> {
        fft.inverse_real(self.slice(j))
    }

    /// Exact Hermitian symmetry of every slice (equality, not tolerance).
    pub fn is_hermitian(&self) -> bool {
        let n = self.grid.points();
        self.increments.chunks(n).all(|s| {
            (0..n).all(|i| {
                let c = self.grid.conjugate_index(i);
                s[c].re == s[i].re && s[c].im == -s[i].im
            })
        })
    }

    /// Sums groups of `factor` consecutive increments (time step dt·factor).
    pub fn coarsen(&self, factor: usize) -> Result<NoiseSlab> {
        if factor == 0 || !self.grid.nt.is_multiple_of(factor) {
            return Err(Error::invalid(format!("factor {factor} does not divide nt = {}", self.grid.nt)));
        }
        let n = self.grid.points();
        let nt = self.grid.nt / factor;
        let grid = GridSpec { dt: self.grid.dt * factor as f64, nt, ..self.grid };
        let mut inc = vec![Complex64::default(); nt * n];
        for (jc, out) in inc.chunks_mut(n).enumerate() {
            for j in jc * factor..(jc + 1) * factor {
                for (o, z) in out.iter_mut().zip(self.slice(j)) {
                    *o += z;
                }
            }
        }
        Ok(NoiseSlab { grid, kernel: self.kernel.clone(), seed: self.seed, replica: self.replica, increments: inc })
    }

    /// Binary dump: magic, version, JSON header, then little-endian complex64
    /// (two f32) payload. The payload is single precision.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = DumpHeader {
            grid: self.grid,
            kernel_tag: self.kernel.tag().to_string(),
            kernel: self.kernel.clone(),
            seed: self.seed,
            replica: self.replica,
        };
        let h = serde_json::to_vec(&header).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(h.len() as u32).to_le_bytes())?;
        w.write_all(&h)?;
        for z in &self.increments {
            w.write_all(&(z.re as f32).to_le_bytes())?;
            w.write_all(&(z.im as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<NoiseSlab> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Io("not a noise dump (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != DUMP_VERSION {
            return Err(Error::Io(format!("unsupported noise dump version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut h = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut h)?;
        let header: DumpHeader = serde_json::from_slice(&h).map_err(|e| Error::Io(format!("bad dump header: {e}")))?;
        header.grid.validate()?;
        let count = header.grid.nt * header.grid.points();
        let mut payload = vec![0u8; count * 8];
        r.read_exact(&mut payload)?;
        let increments = payload
            .chunks_exact(8)
            .map(|b| {
                let re = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                let im = f32::from_le_bytes([b[4], b[5], b[6], b[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Ok(NoiseSlab { grid: header.grid, kernel: header.kernel, seed: header.seed, replica: header.replica, increments })
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<NoiseSlab> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
