//! Hierarchical compare-aggregate reader for multiple-choice reading
//! comprehension over sentence-segmented plots, with CNN and LSTM
//! aggregation, ensembles, adversarial attacks, and attention analysis.

pub mod attacks;
pub mod corpus;
mod error;
pub mod model;
pub mod numeric;
pub mod report;
pub mod train;

pub use error::{Error, Result};
