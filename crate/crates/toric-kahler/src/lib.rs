//! Ricci Calabi functional, the operators L and L̄ per torus weight, the
//! Matsushima decomposition and the inverse Monge–Ampère flow on toric Fano
//! manifolds of dimension one and two.
//!
//! Measures drop the (2π)ⁿ n! factors: the volume is vol(P) and the metric
//! density in log-affine coordinates is det D²φ.

pub mod error;
pub mod flow;
pub mod kahler_state;
pub mod mesh;
pub mod sector_ops;
pub mod spectra;
pub mod toric;
pub mod torus_oracle;

pub use error::{Error, Result};
