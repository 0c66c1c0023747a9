//! Two-scale loss functions for classification networks.
//!
//! The crate bundles a small bias-free network stack with hand-written
//! backpropagation, the scale measurements those losses need, the loss family
//! itself, a seeded SGD trainer, evaluation metrics, and readers for the
//! usual image benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check

pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod nn;
pub mod scaling;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
