//! Trait-aware automated essay scoring with hierarchical attention networks.
//!
//! The crate bundles a small reverse-mode autodiff engine, the layers needed
//! for a CNN/attention/LSTM grading stack, ASAP-format data handling, and
//! training and evaluation loops for single-task and multi-task models.

// Casts between `Float` and f64 are no-ops only in the default build.
#![allow(clippy::unnecessary_cast)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod glove;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Float, Graph, ParamId, ParamStore, Tensor, Var};
