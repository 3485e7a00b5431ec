//! Gaussian-state simulation of spatially multimode twin beams, their
//! transport through a lossy fiber-bundle conduit, and slit-scanned
//! intensity-difference detection.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases. Configuration, pipeline and
//! command layers work in `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commands;
pub mod config;
pub mod detection;
pub mod error;
pub mod lattice;
pub mod mc;
pub mod output;
pub mod pipeline;
mod scalar;
pub mod selftest;
pub mod source;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::{from_db, to_db, Real};

pub type FieldState64 = lattice::FieldState<f64>;
pub type FieldState32 = lattice::FieldState<f32>;
pub type Grid1D64 = lattice::Grid1D<f64>;
pub type Grid1D32 = lattice::Grid1D<f32>;
pub type SourceParams64 = source::SourceParams<f64>;
pub type SourceParams32 = source::SourceParams<f32>;
pub type ConduitParams64 = transport::ConduitParams<f64>;
pub type ConduitParams32 = transport::ConduitParams<f32>;
pub type SlitParams64 = detection::SlitParams<f64>;
pub type SlitParams32 = detection::SlitParams<f32>;
pub type ScanResult64 = detection::ScanResult<f64>;
pub type DipFit64 = analysis::DipFit<f64>;
