//! Dataset distillation by contrastive mutual-information maximization.
//!
//! A small synthetic labeled set is learned from a real one by minimizing a
//! distribution-matching loss plus per-layer noise-contrastive losses between
//! the activations of a real-trained and a synthetic-trained MLP. The crate
//! also ships the verification oracles used to check it: discrete mutual
//! information, relabeling invariance, finite-difference gradients and
//! CKA/HSIC representation similarity.

pub mod analysis;
pub mod contrast;
pub mod data;
pub mod distill;
mod error;
pub mod nn;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
