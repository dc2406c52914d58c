pub mod analysis;
pub mod check;
pub mod config;
pub mod error;
pub mod fft;
pub mod green;
pub mod grid;
pub mod kernels;
pub mod mlf;
pub mod noise;
pub mod pipeline;
pub mod quad;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod stats;

pub use check::{BoundCheck, Route, Verdict};
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete f64 instantiations used by the simulation and analysis layers.
pub type Params = kernels::FracParams<f64>;
pub type Kernel = kernels::SpectralKernel<f64>;
pub type KernelSpec = kernels::KernelKind<f64>;
pub type Symbol = green::GreenSymbol<f64>;
pub type Ml = mlf::MittagLeffler<f64>;
