//! Spectra, heat kernels and bound verification for the degenerate-diffusion
//! Schrödinger operator `A = (1+|x|^alpha) Δ - |x|^beta` on `R^N`.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod heat;
pub mod model;
pub mod quad;
pub mod spectral;
pub mod tridiag;
pub mod verify;
pub mod wkb;
pub mod zonal;

pub use error::{Error, Result};
pub use model::OperatorParams;
