//! Dictionary screening for text classifiers.
//!
//! A benchmark classifier is trained on the full dictionary, every keyword is
//! scored by how much ablating it moves the predicted class probabilities, the
//! dictionary is cut down to the most important keywords, and a reduced model
//! is retrained on the re-encoded corpus. TF-IDF and paired t-test scorers are
//! provided as baselines.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod screening;
pub mod training;

pub use error::{Error, Result};
