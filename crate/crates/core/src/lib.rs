//! Worst-case compliance topology optimization.
//!
//! The design is a SIMP pseudo-density field on a plane-strain cantilever.
//! An adversary degrades the material inside a bounded uncertainty set so as
//! to maximize compliance; with the harmonic (inverse) interpolation of the
//! Young's modulus that inner problem is jointly concave in degradation and
//! displacement, so a barrier Newton method finds its global maximizer. The
//! outer design loop minimizes the resulting worst-case compliance with the
//! method of moving asymptotes, using the closed-form gradient of the
//! optimal-value function.
//!
//! Module map:
//!
//! - [`fe`]: mesh, element stiffness, sparse assembly and Cholesky solves
//! - [`filter`]: linear-decay density filter and its transpose
//! - [`material`]: inverse, RAMP and SIMP interpolation laws
//! - [`uncertainty`]: admissible degradation sets and their constraint functions
//! - [`adversary`]: the inner worst-case solver and its diagnostics
//! - [`robust`]: nominal SIMP, MMA and the robust outer loop
//! - [`config`], [`export`], [`run`]: configuration, file output and orchestration

pub mod adversary;
pub mod config;
pub mod error;
pub mod export;
pub mod fe;
pub mod filter;
pub mod material;
pub mod robust;
pub mod run;
pub mod uncertainty;

pub use error::{Error, Result};

// The guide's snippets run as doc-tests so the book cannot drift from the API.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/finite-elements.md")]
    mod finite_elements {}
    #[doc = include_str!("../../../book/src/filter.md")]
    mod filter {}
    #[doc = include_str!("../../../book/src/material.md")]
    mod material {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/adversary.md")]
    mod adversary {}
    #[doc = include_str!("../../../book/src/robust.md")]
    mod robust {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
