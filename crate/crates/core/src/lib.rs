//! Downlink massive-MIMO simulator for a mixed OTFS/OFDM user population.
//!
//! High-mobility users are served on the delay-Doppler grid (OTFS), low-mobility
//! users on OFDM. The crate builds the discrete channel model, zero-forcing and
//! maximum-ratio precoders, evaluates spectral efficiency both by Monte Carlo
//! and in closed form, and allocates power for max-min and weighted max-min
//! fairness.

pub mod channel;
pub mod complexity;
pub mod error;
pub mod linalg;
pub mod power;
pub mod precoders;
pub mod rng;
pub mod scalar;
pub mod se;
pub mod sim;
pub mod transforms;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision complex scalar.
pub type Cplx = num_complex::Complex<f64>;
/// Double-precision complex matrix.
pub type CMat = linalg::CMatrix<f64>;
/// Single-precision complex matrix.
pub type CMat32 = linalg::CMatrix<f32>;
