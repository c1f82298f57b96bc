//! Geometry and evaluation kernels for multi-LiDAR perception rigs.
//!
//! The crate covers the pipeline from raw per-sensor point clouds to
//! evaluated detections: rigid transforms with first-order uncertainty
//! propagation, controlled extrinsic perturbation, oriented-box geometry,
//! cross-sensor fusion at the input, feature, or result stage,
//! uncertainty-weighted plane fitting, detection loss kernels, and
//! average-precision evaluation. A small CLI (`multilidar`) exposes the
//! end-to-end experiments.

pub mod boxes;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod io;
pub mod losses;
pub mod perturbation;
pub mod plane;
pub mod propagation;
pub mod scene;
pub mod se3;
pub mod stats;

pub use error::{Error, Result};
