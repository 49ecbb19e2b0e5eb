//! Head-pose estimation toolkit.
//!
//! The crate bundles the numerical machinery of a quaternion-based head pose
//! estimator without the neural backbone:
//!
//! - [`geometry`]: quaternion algebra, SO(3) exp/log maps, Euler conversion,
//!   and positive-definite covariance construction from raw features.
//! - [`losses`]: regression and negative-log-likelihood training losses, each
//!   with an analytic gradient in raw feature space plus a finite-difference
//!   checker.
//! - [`facemodel`]: a linear deformable face model with orthographic
//!   projection, 68-landmark extraction, and mesh-derived bounding boxes.
//! - [`fitting`]: pose/shape recovery from 2D landmarks under pose and
//!   Gaussian-mixture shape priors, plus EM fitting of the mixture itself.
//! - [`augment`]: a seeded, fully deterministic crop/affine/intensity/noise
//!   augmentation pipeline with consistent label transformation.
//! - [`data`]: JSON-lines sample records, PGM image I/O, and the weighted
//!   multi-dataset mixing sampler.
//! - [`eval`]: the evaluation protocol (99° filter, Euler/MAE/geodesic
//!   metrics, NME-2D, noise sweeps, uncertainty correlation).
//! - [`trainer`]: a desk-scale linear prediction head trained with Adam on
//!   synthetic tasks, exercising the full loss stack end to end.
//!
//! All randomness is seeded; identical seeds and inputs produce bit-identical
//! results.

pub mod augment;
pub mod data;
pub mod error;
pub mod eval;
pub mod facemodel;
pub mod fitting;
pub mod geometry;
pub mod losses;
pub mod trainer;

pub use error::{Error, Result};
