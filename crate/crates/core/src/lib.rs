//! Construction and verification of vacuum initial data for the Einstein
//! constraint equations on flat periodic tori.
//!
//! The crate provides grid-sampled tensor fields with periodic centered
//! differences, metric-dependent calculus, the conformal and weighted vector
//! Laplacians with exact discrete adjoint structure, transverse decomposition
//! with kernel deflation, and the coupled conformal-method solvers (classical,
//! physical-TT, split-source, and general scale rules), together with the
//! assembly and residual evaluation of the constraint equations themselves.

pub mod analytic;
pub mod calculus;
pub mod cg;
pub mod conformal;
pub mod constraints;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod lichnerowicz;
pub mod linearize;
pub mod metric;
pub mod operators;
pub mod solvers;
pub mod york;

pub use error::{Error, Result};
pub use field::{OneForm, ScalarField, SymTensor2};
pub use grid::GridSpec;
pub use metric::Metric;

/// Set the worker count for data-parallel kernels; reductions stay
/// sequential so all results are independent of this setting.
pub fn set_threads(k: usize) {
    field::par::set_threads(k);
}
