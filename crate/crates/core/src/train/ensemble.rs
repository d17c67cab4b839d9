use super::{gold_labels, predict_all, EvalRecord, Examples, TrainedModel};
use crate::error::{Error, Result};
use crate::model::{argmax, ModelParams};

/// Indices of the `n` best pool members by validation accuracy, ties to
/// the lower seed.
pub fn select_top(pool: &[TrainedModel], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| {
        pool[b]
            .val_accuracy()
            .total_cmp(&pool[a].val_accuracy())
            .then(pool[a].seed.cmp(&pool[b].seed))
    });
    idx.truncate(n);
    idx
}

/// Plurality of per-model argmax answers. Ties go to the tied candidate
/// with the largest summed probability, then to the lowest index.
pub fn majority_vote(per_model: &[Vec<f64>]) -> Result<usize> {
    let k = per_model
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Contract("majority vote needs at least one model".into()))?;
    if per_model.iter().any(|p| p.len() != k) {
        return Err(Error::Contract("models disagree on the candidate count".into()));
    }
    let mut votes = vec![0usize; k];
    let mut mass = vec![0.0; k];
    for probs in per_model {
        votes[argmax(probs)] += 1;
        for (m, p) in mass.iter_mut().zip(probs) {
            *m += p;
        }
    }
    let top = *votes.iter().max().expect("k > 0");
    let mut best: Option<usize> = None;
    for j in (0..k).filter(|&j| votes[j] == top) {
        if best.is_none_or(|b| mass[j] > mass[b]) {
            best = Some(j);
        }
    }
    Ok(best.expect("at least one candidate has the top vote count"))
}

/// Majority-vote accuracy of `models` on `examples`.
pub fn ensemble_evaluate(models: &[&ModelParams], examples: &Examples, model_id: &str, split: &str) -> Result<EvalRecord> {
    let gold = gold_labels(examples)?;
    let per_model: Vec<Vec<Vec<f64>>> = models.iter().map(|m| predict_all(m, examples)).collect::<Result<_>>()?;
    let mut bits = Vec::with_capacity(examples.len());
    for (q, &g) in gold.iter().enumerate() {
        let votes: Vec<Vec<f64>> = per_model.iter().map(|p| p[q].clone()).collect();
        bits.push(majority_vote(&votes)? == g);
    }
    Ok(EvalRecord::from_bits(model_id, split, examples.qids.clone(), bits))
}
