//! Scribble-supervised polyp-style segmentation at desk scale.
//!
//! The crate bundles a from-scratch reverse-mode autodiff engine, a small
//! multi-scale conv backbone with a deformable-attention encoder neck, the
//! weak/semi-supervised loss suite, a two-stage teacher-student trainer, a
//! synthetic scribble-annotated dataset generator, and Dice/IoU evaluation.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
