use serde::{Deserialize, Serialize};

use super::network::{build, ForwardNodes};
use super::ModelParams;
use crate::corpus::EncodedInstance;
use crate::error::{Error, Result};
use crate::numeric::{Graph, Matrix, Rng};

/// Which answer the relevance scores are read relative to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    /// The model's own argmax answer.
    Selected,
    /// A fixed candidate, typically the gold answer.
    Answer(usize),
}

/// Word-level quantities for one plot sentence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceTrace {
    /// `G` of the question over this sentence (`|q| × m`).
    pub question_attention: Matrix,
    /// `T^w_q` (`l × m`).
    pub question_comparison: Matrix,
    /// `G` of each candidate over this sentence.
    pub answer_attention: Vec<Matrix>,
    /// `T^w_a` per candidate.
    pub answer_comparison: Vec<Matrix>,
}

/// Sentence-level quantities for one candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub answer_rep: Vec<f64>,
    /// `R_p(j)`, one column per plot sentence.
    pub sentence_reps: Matrix,
    pub question_comparison: Matrix,
    pub answer_comparison: Matrix,
    pub plot_rep: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub sentences: Vec<SentenceTrace>,
    pub question_rep: Vec<f64>,
    pub candidates: Vec<CandidateTrace>,
    pub confidences: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub selected: usize,
    /// Candidate the `relevance` list is conditioned on.
    pub conditioned_on: usize,
    /// Per-sentence relevance relative to `conditioned_on`.
    pub relevance: Vec<f64>,
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn averaged_column_means(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let rows = a.rows() as f64;
    (0..a.cols())
        .map(|c| (0..a.rows()).map(|r| (a.get(r, c) + b.get(r, c)) / 2.0).sum::<f64>() / rows)
        .collect()
}

impl ForwardTrace {
    fn from_nodes(g: &Graph, nodes: &ForwardNodes, conditioning: Conditioning) -> Result<Self> {
        let probabilities = g.value(nodes.probabilities).col(0);
        let selected = argmax(&probabilities);
        let conditioned_on = match conditioning {
            Conditioning::Selected => selected,
            Conditioning::Answer(j) if j < nodes.candidates.len() => j,
            Conditioning::Answer(j) => {
                return Err(Error::Contract(format!(
                    "conditioning answer {j} out of range for {} candidates",
                    nodes.candidates.len()
                )))
            }
        };
        let sentences = nodes
            .sentences
            .iter()
            .map(|s| SentenceTrace {
                question_attention: g.value(s.question_attention).clone(),
                question_comparison: g.value(s.question_comparison).clone(),
                answer_attention: s.answer_attention.iter().map(|&n| g.value(n).clone()).collect(),
                answer_comparison: s.answer_comparison.iter().map(|&n| g.value(n).clone()).collect(),
            })
            .collect();
        let candidates = nodes
            .candidates
            .iter()
            .map(|c| CandidateTrace {
                answer_rep: g.value(c.answer_rep).col(0),
                sentence_reps: g.value(c.sentence_reps).clone(),
                question_comparison: g.value(c.question_comparison).clone(),
                answer_comparison: g.value(c.answer_comparison).clone(),
                plot_rep: g.value(c.plot_rep).col(0),
            })
            .collect();
        let mut trace = ForwardTrace {
            sentences,
            question_rep: g.value(nodes.question_rep).col(0),
            candidates,
            confidences: g.value(nodes.confidences).col(0),
            probabilities,
            selected,
            conditioned_on,
            relevance: Vec::new(),
        };
        trace.relevance = trace.relevance_for(conditioned_on);
        Ok(trace)
    }

    /// Feature-mean of `(T^s_q + T^s_a)/2` per sentence for candidate `j`.
    pub fn relevance_for(&self, j: usize) -> Vec<f64> {
        let c = &self.candidates[j];
        averaged_column_means(&c.question_comparison, &c.answer_comparison)
    }

    /// Feature-mean of `(T^w_q + T^w_a)/2` per word of `sentence` for candidate `j`.
    pub fn word_importance(&self, sentence: usize, j: usize) -> Vec<f64> {
        let s = &self.sentences[sentence];
        averaged_column_means(&s.question_comparison, &s.answer_comparison[j])
    }

    /// Sentence with the highest relevance for `j`, lowest index on ties.
    pub fn most_relevant_sentence(&self, j: usize) -> usize {
        argmax(&self.relevance_for(j))
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }
}

/// Full inference pass with every intermediate retained.
pub fn forward(params: &ModelParams, enc: &EncodedInstance, conditioning: Conditioning) -> Result<ForwardTrace> {
    let mut g = Graph::new();
    let nodes = build(&mut g, params, enc, None)?;
    ForwardTrace::from_nodes(&g, &nodes, conditioning)
}

/// Candidate probabilities only.
pub fn predict_probabilities(params: &ModelParams, enc: &EncodedInstance) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let nodes = build(&mut g, params, enc, None)?;
    Ok(g.value(nodes.probabilities).col(0))
}

/// Training graph for one instance: returns the graph and its NLL node.
/// Dropout is active when `dropout_rng` is given.
pub fn loss_graph(
    params: &ModelParams,
    enc: &EncodedInstance,
    gold: usize,
    dropout_rng: Option<&mut Rng>,
) -> Result<(Graph, crate::numeric::NodeId)> {
    if gold >= enc.candidates.len() {
        return Err(Error::Contract(format!("gold index {gold} out of range")));
    }
    let mut g = Graph::new();
    let nodes = build(&mut g, params, enc, dropout_rng)?;
    let loss = g.nll(nodes.confidences, gold)?;
    Ok((g, loss))
}
