//! Covariant differential calculus on compact Riemannian manifolds, with
//! numerical checks of the Bochner formula, the integral identities behind
//! the Hessian inequality `∫|∇²√u|² ≤ C ∫ u|∇² log u|²`, and an empirical
//! search for the constant `C`.

pub mod calculus;
pub mod error;
pub mod jets;
pub mod manifold;
pub mod quadrature;
pub mod verifier;

pub use error::{Error, Result};
