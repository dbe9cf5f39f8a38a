//! Supervised graph encoder-decoder for learning the mapping from structural
//! to functional brain connectivity, together with the model-selection
//! protocol, baseline comparisons and edge-wise statistics around it.

pub mod analysis;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod gsp;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
