//! Spectral-efficiency ground truth and fast SE predictors for multi-user
//! massive-MIMO downlink.
//!
//! The crate is organized as a pipeline:
//!
//! - [`channel`] draws synthetic multi-user channels and persists them.
//! - [`mimo`] computes ground-truth SE under MRT/ZF precoding with MMSE or
//!   MMSE-IRC detection.
//! - [`features`] turns a channel into fixed-length feature vectors.
//! - [`models`] trains and evaluates linear, boosted-tree and MLP predictors.
//! - [`harness`] wires everything into reproducible experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
mod codec;
pub mod error;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod mimo;
pub mod models;
pub mod table;

pub use error::{Error, ErrorClass, Result};
