use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode_instance, Dataset, EmbeddingTable, QAInstance};
use crate::error::{Error, Result};
use crate::model::{forward, Conditioning, ForwardTrace, ModelParams};

/// Percentage of questions whose annotated evidence attains the top
/// relevance score, averaged over models. Groups a model never produced
/// are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceStats {
    pub all: f64,
    pub correct: Option<f64>,
    pub incorrect: Option<f64>,
    pub questions: usize,
    pub models: usize,
}

/// Whether any evidence sentence reaches the maximum relevance (ties count).
pub fn evidence_ranked_first(trace: &ForwardTrace, evidence: &[usize]) -> bool {
    let top = trace.relevance.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    evidence.iter().any(|&e| trace.relevance.get(e) == Some(&top))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Relevance is read relative to each model's selected answer.
pub fn relevance_rank_metric(
    models: &[&ModelParams],
    dataset: &Dataset,
    instances: &[QAInstance],
    table: &EmbeddingTable,
) -> Result<RelevanceStats> {
    let annotated: Vec<&QAInstance> = instances
        .iter()
        .filter(|q| !q.evidence_sentences.is_empty() && q.correct_index.is_some())
        .collect();
    if annotated.is_empty() || models.is_empty() {
        return Err(Error::EmptyReport);
    }
    let (mut all, mut correct, mut incorrect) = (Vec::new(), Vec::new(), Vec::new());
    for params in models {
        let outcomes: Vec<(bool, bool)> = annotated
            .par_iter()
            .map(|q| {
                let enc = encode_instance(q, dataset.plot_for(q)?, table);
                let trace = forward(params, &enc, Conditioning::Selected)?;
                Ok((Some(trace.selected) == q.correct_index, evidence_ranked_first(&trace, &q.evidence_sentences)))
            })
            .collect::<Result<_>>()?;
        let pct = |filter: &dyn Fn(bool) -> bool| {
            let hits: Vec<bool> = outcomes.iter().filter(|(c, _)| filter(*c)).map(|(_, h)| *h).collect();
            (!hits.is_empty()).then(|| crate::train::accuracy(&hits))
        };
        all.push(pct(&|_| true).expect("annotated set is non-empty"));
        correct.extend(pct(&|c| c));
        incorrect.extend(pct(&|c| !c));
    }
    Ok(RelevanceStats {
        all: mean(&all).expect("at least one model"),
        correct: mean(&correct),
        incorrect: mean(&incorrect),
        questions: annotated.len(),
        models: models.len(),
    })
}
