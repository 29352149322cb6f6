//! Causal mechanism transfer network (CMTN) for unsupervised time-series
//! domain adaptation.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`] dense arrays and a reverse-mode tape with gradient reversal
//! * [`layers`] extractor, LSTM cell, dynamic and temporal attention, heads, losses
//! * [`model`] full forward pass, the adversarial objective, ablation variants, checkpoints
//! * [`trainer`] batching, class balancing, Adam, and the training loop
//! * [`synth`] synthetic two-domain benchmark with controllable shifts
//! * [`metrics`] MAPE, accuracy, rank AUC
//! * [`experiment`] the generate / train / report / ingest workflows behind the CLI

pub mod error;
pub mod exec;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Execution;
pub mod data;
pub mod experiment;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod trainer;
