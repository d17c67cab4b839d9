//! Training loop, multi-seed pools, majority-vote ensembles and significance testing.

mod config;
mod ensemble;
mod examples;
mod stats;
mod trainer;

pub use config::TrainConfig;
pub use ensemble::{ensemble_evaluate, majority_vote, select_top};
pub use examples::Examples;
pub use stats::{mcnemar, mcnemar_counts, McNemar};
pub use trainer::{accuracy, evaluate, model_id, nll_loss, predict_all, train_model, train_pool, EvalRecord, TrainedModel};
pub(crate) use trainer::gold_labels;
