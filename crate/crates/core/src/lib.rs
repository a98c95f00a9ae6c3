//! Numerical toolkit for Orlicz-space approximation.
//!
//! Exponential and sub-exponential N-functions, modulars and Luxemburg norms,
//! the constructive Meyers–Serrin smoothing with weighted-energy diagnostics,
//! and reproducible counterexample scenarios.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod field;
pub mod modular;
pub mod nfunc;
pub mod scalar;
pub mod scenarios;
pub mod smooth;

pub use nfunc::{CustomGenerator, Family, Generator, NFuncError};
pub use scalar::{compensated_sum, CompensatedSum, Scalar};

pub type NFunction = nfunc::NFunction<f64>;
pub type NFunction32 = nfunc::NFunction<f32>;
