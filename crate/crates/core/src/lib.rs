//! Variable-metric proximal alternating linearized minimization for
//! `f(x) + Σ φ(ψ(y_j)) + H(x, y)` with a concave outer function `φ`, and a
//! simulated parallel-MRI reconstruction built on it.

pub mod blockspace;
pub mod composite;
pub mod coupling;
pub mod error;
pub mod linops;
pub mod metrics;
pub mod mri;
pub mod solver;

pub use blockspace::{Block, BlockVector, Field, C64};
pub use error::{Error, Result};
