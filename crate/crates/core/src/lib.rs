//! Building blocks for a small, fully reproducible image classification
//! pipeline: seeded affine augmentation, cosine-cycle snapshot ensembling,
//! freeze/fine-tune training of a dense classifier, and multiclass metrics
//! computed from a confusion matrix.
//!
//! Every random decision is derived from an explicit seed, so the same
//! configuration always yields the same images, parameters and reports.

pub mod augment;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod image;
pub mod metrics;
pub mod optim;
pub mod pnm;
pub mod trainer;

pub use error::{Error, Result};
pub use image::{ImageBuffer, LabeledImage, ValueDomain};
