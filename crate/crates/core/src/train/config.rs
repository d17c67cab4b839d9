use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Aggregator;

/// Optimization and pool settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub pool_size: usize,
    pub ensemble_size: usize,
    /// One seed per pool member; empty means `1..=pool_size`.
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_aggregator(Aggregator::Cnn)
    }
}

impl TrainConfig {
    /// Defaults with the aggregator-specific learning rate.
    pub fn for_aggregator(aggregator: Aggregator) -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 30,
            learning_rate: match aggregator {
                Aggregator::Cnn => 0.001,
                Aggregator::RnnLstm => 0.0025,
            },
            l2: 0.0001,
            pool_size: 11,
            ensemble_size: 9,
            seeds: Vec::new(),
        }
    }

    /// Defaults for the small synthetic-data models. The CNN needs a larger
    /// step there; the LSTM keeps its rate.
    pub fn toy(aggregator: Aggregator) -> Self {
        let mut cfg = TrainConfig::for_aggregator(aggregator);
        if aggregator == Aggregator::Cnn {
            cfg.learning_rate = 0.005;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.l2 < 0.0 {
            return Err(Error::Config("learning_rate must be positive and l2 non-negative".into()));
        }
        if self.ensemble_size == 0 || self.ensemble_size > self.pool_size {
            return Err(Error::Config(format!(
                "ensemble_size {} must lie in 1..={}",
                self.ensemble_size, self.pool_size
            )));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.pool_size {
            return Err(Error::Config(format!(
                "{} seeds given for a pool of {}",
                self.seeds.len(),
                self.pool_size
            )));
        }
        Ok(())
    }

    pub fn pool_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (1..=self.pool_size as u64).collect()
        } else {
            self.seeds.clone()
        }
    }
}
