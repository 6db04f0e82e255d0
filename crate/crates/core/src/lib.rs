//! Discrete muscle-load estimation from arm photographs.
//!
//! The pipeline segments the arm from a blue backdrop, turns each image into
//! one of four feature vectors (bag of keypoints, uniform LBP, hue/saturation
//! histograms or contour moments), trains a one-vs-one RBF support vector
//! machine and reports per-class and aggregate metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bkp;
pub mod clustering;
pub mod colorhist;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod lbp;
pub mod moments;
pub mod numfmt;
pub mod pipeline;
pub mod segmentation;
pub mod svm;

pub use error::{Error, ErrorKind, Result};
pub use features::{FeatureVector, Method};
pub use imaging::{BinaryMask, ImageBuffer};
