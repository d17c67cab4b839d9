use super::{Aggregator, ModelConfig};
use crate::error::Result;
use crate::numeric::{derive_seed, rng_from_seed, xavier_matrix, Matrix, ParamId, ParamSet, ParamTensor, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionIds {
    pub gate_w: ParamId,
    pub gate_b: ParamId,
    pub value_w: ParamId,
    pub value_b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareIds {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBankIds {
    pub width: usize,
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AggregatorIds {
    Cnn(Vec<ConvBankIds>),
    Lstm { w: ParamId, b: ParamId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionIds {
    pub hidden_w: ParamId,
    pub hidden_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Handles into [`ModelParams::tensors`] for every weight group.
///
/// Comparison and aggregation weights exist once per level and are reused
/// for every question/answer/plot pairing at that level.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamIds {
    pub projection: ProjectionIds,
    pub compare_word: CompareIds,
    pub compare_sentence: CompareIds,
    pub aggregate_word: AggregatorIds,
    pub aggregate_sentence: AggregatorIds,
    pub prediction: PredictionIds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: ParamSet,
    pub ids: ParamIds,
    /// Fingerprint of the embedding table the model was trained against.
    pub embedding_fingerprint: u64,
}

struct Builder<'a> {
    set: ParamSet,
    rng: &'a mut Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> Result<ParamId> {
        let value = xavier_matrix(rows, cols, self.rng)?;
        Ok(self.set.add(ParamTensor::new(name, value, true)))
    }

    fn bias(&mut self, name: String, rows: usize) -> ParamId {
        self.set.add(ParamTensor::new(name, Matrix::zeros(rows, 1), false))
    }

    fn compare(&mut self, prefix: &str, features: usize) -> Result<CompareIds> {
        Ok(CompareIds {
            w: self.weight(format!("{prefix}.compare.w"), features, 2 * features)?,
            b: self.bias(format!("{prefix}.compare.b"), features),
        })
    }

    fn aggregator(&mut self, prefix: &str, config: &ModelConfig, input: usize) -> Result<AggregatorIds> {
        Ok(match config.aggregator {
            Aggregator::Cnn => {
                let mut banks = Vec::with_capacity(config.conv_widths.len());
                for &width in &config.conv_widths {
                    banks.push(ConvBankIds {
                        width,
                        w: self.weight(format!("{prefix}.conv{width}.w"), config.conv_channels, width * input)?,
                        b: self.bias(format!("{prefix}.conv{width}.b"), config.conv_channels),
                    });
                }
                AggregatorIds::Cnn(banks)
            }
            Aggregator::RnnLstm => {
                let h = config.hidden;
                AggregatorIds::Lstm {
                    w: self.weight(format!("{prefix}.lstm.w"), 4 * h, input + h)?,
                    b: self.bias(format!("{prefix}.lstm.b"), 4 * h),
                }
            }
        })
    }
}

impl ModelParams {
    /// Fresh Xavier-initialized weights (zero biases) drawn from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(derive_seed(config.seed, "init"));
        let mut b = Builder {
            set: ParamSet::new(),
            rng: &mut rng,
        };
        let (d, l) = (config.embedding_dim, config.hidden);
        let projection = ProjectionIds {
            gate_w: b.weight("proj.gate.w".into(), l, d)?,
            gate_b: b.bias("proj.gate.b".into(), l),
            value_w: b.weight("proj.value.w".into(), l, d)?,
            value_b: b.bias("proj.value.b".into(), l),
        };
        let word_out = config.aggregate_width();
        let compare_word = b.compare("word", l)?;
        let aggregate_word = b.aggregator("word", config, 2 * l)?;
        let compare_sentence = b.compare("sent", word_out)?;
        let aggregate_sentence = b.aggregator("sent", config, 2 * word_out)?;
        let prediction = PredictionIds {
            hidden_w: b.weight("pred.hidden.w".into(), config.dense_size, word_out)?,
            hidden_b: b.bias("pred.hidden.b".into(), config.dense_size),
            out_w: b.weight("pred.out.w".into(), 1, config.dense_size)?,
            out_b: b.bias("pred.out.b".into(), 1),
        };
        Ok(ModelParams {
            config: config.clone(),
            tensors: b.set,
            ids: ParamIds {
                projection,
                compare_word,
                compare_sentence,
                aggregate_word,
                aggregate_sentence,
                prediction,
            },
            embedding_fingerprint: 0,
        })
    }

    pub fn value(&self, name: &str) -> Option<&Matrix> {
        self.tensors.find(name).map(|id| self.tensors.value(id))
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.scalar_count()
    }
}
