//! Integrators and growth-rate diagnostics for scalar functional
//! differential equations with a positive sublinear right-hand side.
//!
//! The solution of `x' = ∫μ₁(ds) f(x(t−s)) + ∫μ₂(ds) f(x(t−s))` is compared
//! with the ODE `y' = M f(y)`, `M` the total mass, through the ratios
//! `F(x)/(Mt)`, `x/F⁻¹(Mt)` and `log x/log t`, where `F(x) = ∫₁ˣ du/f(u)`.

// `!(x > 0.0)` rejects NaN along with the values it names.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod growth;
pub mod integrator;
pub mod measures;
pub mod nonlinear;
pub mod quadrature;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/measures.md")]
    struct Measures;
    #[doc = include_str!("../../../book/src/nonlinearities.md")]
    struct Nonlinearities;
    #[doc = include_str!("../../../book/src/growth.md")]
    struct Growth;
    #[doc = include_str!("../../../book/src/integrator.md")]
    struct Integrator;
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    struct Diagnostics;
}
