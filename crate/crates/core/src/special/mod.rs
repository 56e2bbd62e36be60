//! Numerics the closed forms depend on: `K_0`, `K_1`, their common
//! asymptote, and adaptive quadrature on finite and semi-infinite ranges.

mod bessel;
mod quadrature;

pub use bessel::{asymptotic_k, bessel_k0, bessel_k0e, bessel_k1, bessel_k1e};
pub use quadrature::{integrate, integrate_estimate, Estimate, QuadratureSpec};
