//! Nonclassicality and NPT-entanglement verdicts for light emitted by
//! localized sources.
//!
//! The field radiated by a source that is small compared with its emission
//! wavelength factorizes into a direction-dependent mode function and a
//! universal source operator, `E_j^(+) = chi_j S`. Normally ordered moment
//! matrices of the fields in different directions are then congruent to the
//! moment matrix of the field in a single direction, so every negative
//! nonclassicality minor yields an explicit NPT-entanglement witness for the
//! fields in different directions.
//!
//! The crate is split along that pipeline:
//!
//! - [`opalg`]: symbolic field-operator polynomials, normal/time ordering,
//!   partial transposition and reduction to source moments.
//! - [`qcore`]: emitter models (two-level ensembles, driven Kerr mode),
//!   dense operators and density matrices.
//! - [`dynamics`]: Lindblad generators, steady states, propagation and
//!   multi-time correlations via the quantum regression theorem.
//! - [`witness`]: moment tables, witness matrices and verdicts.
//! - [`oracle`]: brute-force partial-transpose checks on split bosonic states.
//! - [`cli`]: scenario files, pipelines, sweeps and result documents.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod linalg;
pub mod opalg;
pub mod oracle;
pub mod qcore;
pub mod witness;

mod error;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<C64>;
