//! Impedance-to-impedance (ItI) operators for `Δu + k²Vu = 0` on rectangles.
//!
//! The crate builds leaf ItI operators by Chebyshev collocation, glues them
//! with the hierarchical merge `W = (I - R₁R₂)⁻¹`, converts to
//! Dirichlet-to-Neumann maps, and measures weighted operator norms used to
//! check frequency-explicit bounds against closed-form solutions on the
//! unit square.

pub mod domain;
pub mod error;
pub mod harness;
pub mod io;
pub mod leaf;
pub mod linalg;
pub mod merge;
pub mod neumann;
pub mod norms;
pub mod oracle;
pub mod probes;
pub mod spectral;

pub use error::{Error, Result};
