//! Data-driven models of unmodelled single-qubit dynamics.
//!
//! A Liouville–von Neumann or Lindblad baseline is augmented with a
//! trainable source term (structure-preserving, affine or nonlinear) and
//! fitted against state-tomography records. The crate also contains the
//! synthetic "twin" generator used to produce ground-truth data.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod models;
pub mod qcore;
pub mod tomography;
pub mod train;
pub mod twin;

pub use error::{Error, Result};
