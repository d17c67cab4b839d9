use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Precision;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Cnn,
    RnnLstm,
}

impl Aggregator {
    pub fn label(self) -> &'static str {
        match self {
            Aggregator::Cnn => "CNN",
            Aggregator::RnnLstm => "RNN-LSTM",
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Aggregator::Cnn),
            "lstm" | "rnn" | "rnn-lstm" | "rnn_lstm" => Ok(Aggregator::RnnLstm),
            other => Err(Error::Config(format!("unknown aggregator {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub aggregator: Aggregator,
    pub embedding_dim: usize,
    /// Projection size `l`; also the LSTM unit count.
    pub hidden: usize,
    pub conv_channels: usize,
    pub conv_widths: Vec<usize>,
    pub dense_size: usize,
    pub dropout: f64,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    /// Full-size settings: 150 hidden, 150 channels per width, widths 1/3/5,
    /// dense 150, no dropout.
    pub fn paper(aggregator: Aggregator, embedding_dim: usize, seed: u64) -> Self {
        ModelConfig {
            aggregator,
            embedding_dim,
            hidden: 150,
            conv_channels: 150,
            conv_widths: vec![1, 3, 5],
            dense_size: 150,
            dropout: 0.0,
            seed,
            precision: Precision::F64,
        }
    }

    /// Small sizes for synthetic-data runs.
    pub fn toy(aggregator: Aggregator, embedding_dim: usize, seed: u64) -> Self {
        ModelConfig {
            hidden: 16,
            conv_channels: 12,
            dense_size: 16,
            ..ModelConfig::paper(aggregator, embedding_dim, seed)
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ModelConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden == 0 || self.dense_size == 0 {
            return Err(Error::Config("embedding_dim, hidden and dense_size must be positive".into()));
        }
        if self.aggregator == Aggregator::Cnn {
            if self.conv_channels == 0 {
                return Err(Error::Config("conv_channels must be positive".into()));
            }
            if self.conv_widths.is_empty() || self.conv_widths.iter().any(|w| w % 2 == 0) {
                return Err(Error::Config(format!(
                    "conv widths must be a non-empty list of odd sizes, got {:?}",
                    self.conv_widths
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Width of the vectors produced by an aggregator fed `2·hidden` or
    /// `2·word_output` features.
    pub fn aggregate_width(&self) -> usize {
        match self.aggregator {
            Aggregator::Cnn => self.conv_channels * self.conv_widths.len(),
            Aggregator::RnnLstm => self.hidden,
        }
    }
}
