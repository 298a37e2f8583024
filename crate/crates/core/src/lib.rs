//! Semi-supervised hashing for semi-paired cross-view retrieval.
//!
//! Two heterogeneous feature views (say text and image) are mapped into a
//! common Hamming space. Only part of the training objects are observed in
//! both views and only part of them carry class labels. Training runs in two
//! stages:
//!
//! 1. [`solver::fit`] alternates closed-form block updates of a relaxed
//!    objective that couples anchor-graph label propagation ([`graph`]), a
//!    linear classifier on the projected data, and a pairing penalty between
//!    the two views' projections.
//! 2. [`quantize::itq_fit`] learns an orthogonal rotation per view that
//!    minimizes the quantization error of the projected training data.
//!
//! The resulting [`codec::HashModel`] encodes raw feature vectors into
//! packed [`codec::BinaryCodes`], which [`eval`] ranks by Hamming distance
//! to measure cross-view MAP@R.

pub mod codec;
pub mod dataset;
mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod pipeline;
pub mod quantize;
pub mod seed;
pub mod solver;

pub use error::{Error, Result};
