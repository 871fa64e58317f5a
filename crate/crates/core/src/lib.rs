//! Numerical laboratory for oscillatory integrals with degenerate
//! polynomial phases.
//!
//! The crate is organised bottom-up:
//!
//! - [`phase`]: polynomial phases with exact derivatives, amplitudes,
//!   domains, the boundedness constant `K` and a catalog of model phases;
//! - [`spectral`]: Hessian eigen-clusters, the nonisotropic norms and balls,
//!   local ranks, spectral gaps and the dyadic gap scan;
//! - [`properties`]: randomized trial suite for the geometric inequalities;
//! - [`nondegen`]: the third-derivative nondegeneracy checker and the
//!   degeneracy dimension `k`;
//! - [`quadrature`]: oscillatory integrals `I(λ, ξ)` and decay-exponent fits;
//! - [`bound`]: the gradient seminorm field, the sublevel bound, the
//!   partition of unity and the dyadic ball-volume sum;
//! - [`cubic`]: Hessian-rank statistics of generic cubics.

// Negated comparisons reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod cubic;
pub mod error;
pub mod nondegen;
pub mod numerics;
pub mod phase;
pub mod properties;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
