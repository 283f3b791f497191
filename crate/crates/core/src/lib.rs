//! Numerical laboratory for vortex pinning in inhomogeneous Ginzburg-Landau
//! equations.
//!
//! The crate integrates the transformed parabolic equation
//! `dV/dt = lap V + grad omega . grad V + A V + (B V / eps^2)(1 - |V|^2)` on a
//! uniform grid, tracks vortices by plaquette winding numbers and compares their
//! motion with the limiting gradient flow `dy/dt = -grad omega(y)`.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod glsolver;
pub mod odelaw;
pub mod pinning;
pub mod vortex;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/pinning.md")]
    mod pinning {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/vortices.md")]
    mod vortices {}
    #[doc = include_str!("../../../book/src/ode.md")]
    mod ode {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
