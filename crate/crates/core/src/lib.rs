//! Numerical lab for pure spherical p-spin glasses.
//!
//! A Hamiltonian is `H(σ) = N^{-(p-1)/2} <G, σ^{⊗p}>` with `G` an i.i.d. standard
//! Gaussian tensor, studied on the sphere of radius `√N`. The crate covers
//! sampling and differentiating such Hamiltonians, Riemannian calculus on the
//! sphere, well detection, correlated chains of Hamiltonians and a Newton based
//! well tracker along those chains.

pub mod ensemble;
pub mod error;
pub mod following;
pub mod io;
pub mod linalg;
pub mod optimizers;
pub mod par;
pub mod presets;
pub mod seeds;
pub mod sphere;
pub mod tensor;
pub mod wells;

pub use error::{Error, Result};
pub use sphere::{SpherePoint, TangentFrame};
pub use tensor::{DenseTensor, DisorderTensor, Hamiltonian, Landscape};

/// `ALG(p) = 2√((p-1)/p)`, the algorithmic threshold energy per site.
pub fn alg_threshold(p: usize) -> f64 {
    2.0 * ((p as f64 - 1.0) / p as f64).sqrt()
}

/// `2√(p(p-1))`, the bulk edge of the tangential Hessian spectrum.
pub fn bulk_edge(p: usize) -> f64 {
    2.0 * ((p * (p - 1)) as f64).sqrt()
}
