//! Continuous-pattern entailment models on a miniature transformer encoder.
//!
//! The crate trains a small from-scratch encoder to decide whether a premise
//! entails a hypothesis. Instead of hand-written textual patterns, each model
//! owns a set of freshly allocated "continuous" vocabulary entries whose
//! embeddings are trained like any other parameter; a template interleaves
//! them with the premise and hypothesis before encoding.

pub mod autodiff;
pub mod classifier;
pub mod data;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod patterning;
pub mod training;

pub use error::{Error, Result};
