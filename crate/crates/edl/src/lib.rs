//! Evidential deep learning for classification.
//!
//! A deterministic network predicts non-negative evidence per class;
//! evidence parameterizes a Dirichlet distribution over class
//! probabilities, giving every prediction a built-in uncertainty mass.
//! The crate covers the full loop: Dirichlet opinion algebra, the three
//! evidential training losses with their misleading-evidence
//! regularizer, a small dense network with analytic gradients, Adam
//! training, FGSM attacks, and the uncertainty evaluation protocols
//! (entropy CDFs, rejection curves, rotation and out-of-distribution
//! sweeps).

pub mod adversarial;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod opinions;
pub mod training;

pub use error::{Error, Result};
