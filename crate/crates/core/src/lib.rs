//! Lattice and spectral-basis laboratory for almost-Kähler and spin-c
//! quantization of compact symplectic manifolds.
//!
//! Backends are the flat 2-torus, the flat 4-torus (optionally with a
//! position-dependent, non-integrable almost complex structure) and the round
//! 2-sphere. On top of them live the prequantum bundle, the Bochner and Dirac
//! operators, a block Lanczos solver, Toeplitz quantization and the
//! semiclassical rate experiments.

pub mod bundle;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod quantization;
pub mod semiclassics;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Bumped whenever a change alters numerical output; part of every cache key.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+num4");
