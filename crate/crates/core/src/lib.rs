//! Long-tailed open-world semi-supervised learning on embedding vectors.
//!
//! The crate trains a query/key contrastive encoder with a cosine classifier
//! head. Contrastive temperatures are set per anchor from a density estimate
//! over a feature queue, and soft pseudo-labels are shifted toward classes
//! whose density scores are unstable. Evaluation covers transductive and
//! inductive protocols with Hungarian matching.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod numerics;
pub mod queue;
pub mod tailedness;
pub mod trainer;

pub use error::{Error, Result};
