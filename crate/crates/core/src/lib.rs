//! Training and evaluation toolkit for corruption-robust CNNs.
//!
//! Two loss-level regularizers are provided on top of a small reverse-mode
//! autodiff engine: an auxiliary MSE between activations of an input and its
//! Gaussian low-pass reconstruction (the dual-path filtered convolution), and
//! a supervised contrastive term computed on a unit-normalized projection
//! head. A corruption benchmark harness evaluates trained models over
//! severity-parameterized corruptions and emits CSV/markdown reports.
//!
//! Core numerics are generic over the scalar type via [`scalar::Real`];
//! the harness and CLI run everything in `f64`.

pub mod corruptions;
pub mod data;
pub mod error;
pub mod harness;
pub mod layers;
pub mod losses;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};

/// Default scalar for training and the CLI.
pub type Scalar = f64;
/// Autodiff graph over the default scalar.
pub type Graph = tensor::Graph<Scalar>;
/// Tensor handle into the default graph.
pub type TensorId = tensor::TensorId;
/// Off-graph parameter/value buffer over the default scalar.
pub type Value = tensor::Value<Scalar>;
/// Frequency spectrum over the default scalar.
pub type Spectrum = spectral::Spectrum<Scalar>;
