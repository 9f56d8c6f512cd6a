//! Neuron-level semantic slicing for dense feed-forward classifiers.
//!
//! The crate scores hidden neurons per output category, picks for every layer
//! and category the shortest score-ranked prefix of neurons whose activation
//! Gram matrix is similar enough to the full layer's, and applies the
//! resulting masks to restructuring, adversarial re-adaptation and
//! incremental learning of a new task.

pub mod contribution;
pub mod data;
pub mod error;
pub mod experiment;
pub mod maintenance;
pub mod net;
pub mod slicing;

pub use error::{Error, Result};
