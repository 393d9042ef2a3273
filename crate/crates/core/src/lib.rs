//! Dense neural networks with topology-aware activation functions.
//!
//! The crate provides the `signsplit`, `smoothsplit` and `parametricsplit`
//! activations alongside `relu`, `tanh` and `prelu`, a small dense-network
//! trainer with hand-written backpropagation, synthetic and WDBC datasets, and
//! a seeded experiment grid runner with CSV and markdown reports.

pub mod activations;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod nn;

pub use activations::{ActivationGrads, ActivationKind, ActivationState};
pub use data::{Dataset, SplitDataset};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{Network, NetworkSpec, OutputHead, TrainConfig, TrainReport};
