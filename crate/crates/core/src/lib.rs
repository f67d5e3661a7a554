//! Saliency-guided window compression as a defense against adversarial
//! examples, with the baselines, attacks and metrics needed to evaluate it.

pub mod attack;
pub mod codec;
pub mod defense;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod saliency;

pub use error::{Error, Result};
