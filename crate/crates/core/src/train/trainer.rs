use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Examples, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{argmax, loss_graph, predict_probabilities, ModelConfig, ModelParams};
use crate::numeric::{derive_seed, rng_from_seed, Adam, Gradients, Precision};

/// Per-question correctness of one system on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model_id: String,
    pub split: String,
    pub accuracy: f64,
    pub qids: Vec<String>,
    pub bits: Vec<bool>,
}

impl EvalRecord {
    pub fn from_bits(model_id: impl Into<String>, split: impl Into<String>, qids: Vec<String>, bits: Vec<bool>) -> Self {
        EvalRecord {
            model_id: model_id.into(),
            split: split.into(),
            accuracy: accuracy(&bits),
            qids,
            bits,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Percentage of set bits; 0 for an empty list.
pub fn accuracy(bits: &[bool]) -> f64 {
    if bits.is_empty() {
        return 0.0;
    }
    100.0 * bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64
}

/// `−ln p_gold`, with the probability floored at 1e-12.
pub fn nll_loss(probabilities: &[f64], gold: usize) -> f64 {
    let p = probabilities[gold];
    if p < 1e-12 {
        log::warn!("gold probability {p:e} clamped to 1e-12");
    }
    -p.max(1e-12).ln()
}

pub(crate) fn gold_labels(examples: &Examples) -> Result<Vec<usize>> {
    examples
        .gold
        .iter()
        .zip(&examples.qids)
        .map(|(g, q)| g.ok_or_else(|| Error::Contract(format!("question {q} has no gold label"))))
        .collect()
}

/// Candidate probabilities for every example, in order.
pub fn predict_all(params: &ModelParams, examples: &Examples) -> Result<Vec<Vec<f64>>> {
    examples.inputs.par_iter().map(|enc| predict_probabilities(params, enc)).collect()
}

pub fn evaluate(params: &ModelParams, examples: &Examples, model_id: &str, split: &str) -> Result<EvalRecord> {
    let gold = gold_labels(examples)?;
    let probs = predict_all(params, examples)?;
    let bits = probs.iter().zip(&gold).map(|(p, &g)| argmax(p) == g).collect();
    Ok(EvalRecord::from_bits(model_id, split, examples.qids.clone(), bits))
}

/// A trained model with its per-epoch validation history.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub seed: u64,
    pub params: ModelParams,
    /// Validation records for epochs `0..=epochs`; entry 0 is the initialization.
    pub history: Vec<EvalRecord>,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn val_accuracy(&self) -> f64 {
        self.history[self.best_epoch].accuracy
    }
}

pub fn model_id(config: &ModelConfig, seed: u64) -> String {
    format!("{}-seed{seed}", config.aggregator.label().to_ascii_lowercase())
}

/// Mini-batch Adam training that keeps the parameters of the epoch with
/// the best validation accuracy (earliest on ties, initialization included).
pub fn train_model(
    model: &ModelConfig,
    train: &TrainConfig,
    train_set: &Examples,
    val_set: &Examples,
    seed: u64,
) -> Result<TrainedModel> {
    train.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Contract("training needs non-empty train and val splits".into()));
    }
    let gold = gold_labels(train_set)?;
    let config = model.with_seed(seed);
    let id = model_id(&config, seed);
    let mut params = ModelParams::init(&config)?;
    if config.precision == Precision::F32 {
        params.tensors.round_to_f32();
    }
    let adam = Adam::new(train.learning_rate, train.l2)?;
    let mut shuffle_rng = rng_from_seed(derive_seed(seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = vec![evaluate(&params, val_set, &id, "val")?];
    let mut best = (0, params.clone());
    for epoch in 1..=train.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch_idx, batch) in order.chunks(train.batch_size).enumerate() {
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = rng_from_seed(derive_seed(seed, &format!("dropout:{epoch}:{i}")));
                    let dropout = (config.dropout > 0.0).then_some(&mut rng);
                    let (g, loss) = loss_graph(&params, &train_set.inputs[i], gold[i], dropout)?;
                    Ok((g.value(loss).get(0, 0), g.backward(loss)?))
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            params.tensors.zero_grad();
            for (loss, grads) in &results {
                batch_loss += loss * scale;
                grads.add_to(&mut params.tensors, scale);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: batch_idx });
            }
            adam.step(&mut params.tensors);
            if config.precision == Precision::F32 {
                params.tensors.round_to_f32();
            }
        }
        if params.tensors.iter().any(|(_, t)| !t.value.is_finite()) {
            return Err(Error::Divergence { epoch, batch: order.len().div_ceil(train.batch_size) - 1 });
        }
        let record = evaluate(&params, val_set, &id, "val")?;
        log::info!("{id} epoch {epoch}: val accuracy {:.2}", record.accuracy);
        if record.accuracy > history[best.0].accuracy {
            best = (epoch, params.clone());
        }
        history.push(record);
    }
    let (best_epoch, mut params) = best;
    params.tensors.zero_grad();
    Ok(TrainedModel {
        seed,
        params,
        history,
        best_epoch,
    })
}

/// Trains one model per pool seed. Members are independent, so they run in
/// parallel; results come back in seed-list order.
pub fn train_pool(
    model: &ModelConfig,
    train: &TrainConfig,
    train_set: &Examples,
    val_set: &Examples,
) -> Result<Vec<TrainedModel>> {
    train.validate()?;
    train
        .pool_seeds()
        .par_iter()
        .map(|&seed| train_model(model, train, train_set, val_set, seed))
        .collect()
}
