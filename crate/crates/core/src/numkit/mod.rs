//! Numerical substrate: complex linear algebra, a fixed-topology MLP with
//! exact reverse-mode gradients, and an Adam updater.

mod adam;
mod complex;
pub mod dist;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use complex::{cmat_mul, hermitian, inner, kron_vec, vec_norm, ComplexMat, C64};
pub use mlp::{Activation, Gradients, Head, HeadOutputs, Mlp};
