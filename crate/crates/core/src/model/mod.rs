//! The hierarchical compare-aggregate network.

mod checkpoint;
mod config;
mod network;
mod params;
mod trace;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, FORMAT_VERSION};
pub use config::{Aggregator, ModelConfig};
pub use network::WordLevelCache;
pub use params::{AggregatorIds, CompareIds, ConvBankIds, ModelParams, ParamIds, PredictionIds, ProjectionIds};
pub use trace::{
    argmax, forward, loss_graph, predict_probabilities, CandidateTrace, Conditioning, ForwardTrace, SentenceTrace,
};
