//! Graph construction for the two-level compare-aggregate network.
//!
//! Word level, per plot sentence `P_i` and candidate `A_j`:
//! attention of `Q` and `A_j` over `P_i`, SUBMULT comparison of every plot
//! column against its attended mixture, then aggregation of
//! `T_q | T_a` into `r_p(i,j)`. `Q|Q` and `A_j|A_j` pass through the same
//! aggregator to give `r_q` and `r_a(j)`.
//!
//! Sentence level, per candidate: the columns `r_p(·,j)` form `R_p(j)`,
//! which is compared against `r_q` and `r_a(j)` (single-column attention
//! degenerates to broadcasting) and aggregated into `r_s(j)`. Two dense
//! layers map `r_s(j)` to the confidence `c_j`.

use rand::Rng as _;

use super::{AggregatorIds, CompareIds, ModelParams};
use crate::corpus::EncodedInstance;
use crate::error::{Error, Result};
use crate::numeric::{Activation, Graph, Matrix, NodeId, Rng};

pub(crate) struct SentenceNodes {
    pub question_attention: NodeId,
    pub question_comparison: NodeId,
    pub answer_attention: Vec<NodeId>,
    pub answer_comparison: Vec<NodeId>,
}

pub(crate) struct CandidateNodes {
    pub answer_rep: NodeId,
    pub sentence_reps: NodeId,
    pub question_comparison: NodeId,
    pub answer_comparison: NodeId,
    pub plot_rep: NodeId,
}

pub(crate) struct ForwardNodes {
    pub sentences: Vec<SentenceNodes>,
    pub question_rep: NodeId,
    pub candidates: Vec<CandidateNodes>,
    /// `k × 1` confidences.
    pub confidences: NodeId,
    /// `k × 1` probabilities.
    pub probabilities: NodeId,
}

/// `σ(W_gate x + b_gate) ⊙ tanh(W_value x + b_value)`.
pub(crate) fn project(g: &mut Graph, params: &ModelParams, x: NodeId) -> Result<NodeId> {
    let ids = &params.ids.projection;
    let t = &params.tensors;
    let (gw, gb, vw, vb) = (
        g.param(t, ids.gate_w),
        g.param(t, ids.gate_b),
        g.param(t, ids.value_w),
        g.param(t, ids.value_b),
    );
    let gate = g.dense(x, gw, gb, Activation::Sigmoid)?;
    let value = g.dense(x, vw, vb, Activation::Tanh)?;
    g.mul(gate, value)
}

/// Returns `(G, H)` with `G = softmax_cols(Xᵀ P)` and `H = X G`.
pub(crate) fn attend(g: &mut Graph, query: NodeId, plot: NodeId) -> Result<(NodeId, NodeId)> {
    let qt = g.transpose(query);
    let scores = g.matmul(qt, plot)?;
    let weights = g.softmax_cols(scores);
    let mixed = g.matmul(query, weights)?;
    Ok((weights, mixed))
}

/// SUBMULT: `ReLU(W [(x − h)⊙(x − h) ; x⊙h] + b)` column by column, where
/// `x` is the plot-side column and `h` its attended counterpart.
pub(crate) fn compare(g: &mut Graph, params: &ModelParams, ids: &CompareIds, plot_side: NodeId, attended: NodeId) -> Result<NodeId> {
    let diff = g.sub(plot_side, attended)?;
    let sq = g.mul(diff, diff)?;
    let prod = g.mul(plot_side, attended)?;
    let features = g.concat_rows(&[sq, prod])?;
    let w = g.param(&params.tensors, ids.w);
    let b = g.param(&params.tensors, ids.b);
    g.dense(features, w, b, Activation::Relu)
}

/// Sequence to vector: CNN bank or LSTM, then 1-max pooling over time.
pub(crate) fn aggregate(g: &mut Graph, params: &ModelParams, ids: &AggregatorIds, seq: NodeId) -> Result<NodeId> {
    let t = &params.tensors;
    let outputs = match ids {
        AggregatorIds::Cnn(banks) => {
            let mut maps = Vec::with_capacity(banks.len());
            for bank in banks {
                let w = g.param(t, bank.w);
                let b = g.param(t, bank.b);
                let conv = g.conv1d(seq, w, b, bank.width)?;
                maps.push(g.relu(conv));
            }
            g.concat_rows(&maps)?
        }
        AggregatorIds::Lstm { w, b } => {
            let w = g.param(t, *w);
            let b = g.param(t, *b);
            g.lstm(seq, w, b)?
        }
    };
    g.max_pool_time(outputs)
}

/// Dropout on a fixed embedding input; identity when `rng` is `None` or rate 0.
fn embed(g: &mut Graph, value: &Matrix, rate: f64, rng: Option<&mut Rng>) -> Result<NodeId> {
    let x = g.input(value.clone());
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let data = (0..value.len())
                .map(|_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 })
                .collect();
            let mask = Matrix::new(value.rows(), value.cols(), data)?;
            g.dropout(x, mask)
        }
        _ => Ok(x),
    }
}

struct Projected {
    question: NodeId,
    answers: Vec<NodeId>,
}

fn project_inputs(g: &mut Graph, params: &ModelParams, enc: &EncodedInstance, rng: &mut Option<&mut Rng>) -> Result<Projected> {
    let k = enc.candidates.len();
    if k < 2 {
        return Err(Error::Contract(format!("need at least two candidates, got {k}")));
    }
    let rate = params.config.dropout;
    let q_in = embed(g, &enc.question, rate, rng.as_deref_mut())?;
    let question = project(g, params, q_in)?;
    let mut answers = Vec::with_capacity(k);
    for a in &enc.candidates {
        let a_in = embed(g, a, rate, rng.as_deref_mut())?;
        answers.push(project(g, params, a_in)?);
    }
    Ok(Projected { question, answers })
}

/// `r_q` and every `r_a(j)` through the word-level aggregator on `X|X`.
fn self_reps(g: &mut Graph, params: &ModelParams, proj: &Projected) -> Result<(NodeId, Vec<NodeId>)> {
    let agg = &params.ids.aggregate_word;
    let qq = g.concat_rows(&[proj.question, proj.question])?;
    let question_rep = aggregate(g, params, agg, qq)?;
    let mut answer_reps = Vec::with_capacity(proj.answers.len());
    for &a in &proj.answers {
        let aa = g.concat_rows(&[a, a])?;
        answer_reps.push(aggregate(g, params, agg, aa)?);
    }
    Ok((question_rep, answer_reps))
}

/// Word level for one plot sentence; returns the trace nodes and `r_p(i,j)` per candidate.
fn word_level(
    g: &mut Graph,
    params: &ModelParams,
    proj: &Projected,
    sentence: &Matrix,
    rng: &mut Option<&mut Rng>,
) -> Result<(SentenceNodes, Vec<NodeId>)> {
    let ids = &params.ids;
    let p_in = embed(g, sentence, params.config.dropout, rng.as_deref_mut())?;
    let p = project(g, params, p_in)?;
    let (gq, hq) = attend(g, proj.question, p)?;
    let tq = compare(g, params, &ids.compare_word, p, hq)?;
    let k = proj.answers.len();
    let mut nodes = SentenceNodes {
        question_attention: gq,
        question_comparison: tq,
        answer_attention: Vec::with_capacity(k),
        answer_comparison: Vec::with_capacity(k),
    };
    let mut reps = Vec::with_capacity(k);
    for &a in &proj.answers {
        let (ga, ha) = attend(g, a, p)?;
        let ta = compare(g, params, &ids.compare_word, p, ha)?;
        let both = g.concat_rows(&[tq, ta])?;
        reps.push(aggregate(g, params, &ids.aggregate_word, both)?);
        nodes.answer_attention.push(ga);
        nodes.answer_comparison.push(ta);
    }
    Ok((nodes, reps))
}

/// Sentence level and prediction. `sentence_reps[j][i]` is `r_p(i,j)`.
fn sentence_level(
    g: &mut Graph,
    params: &ModelParams,
    question_rep: NodeId,
    answer_reps: &[NodeId],
    sentence_reps: &[Vec<NodeId>],
) -> Result<(Vec<CandidateNodes>, NodeId, NodeId)> {
    let ids = &params.ids;
    let pred = &ids.prediction;
    let t = &params.tensors;
    let (hw, hb, ow, ob) = (
        g.param(t, pred.hidden_w),
        g.param(t, pred.hidden_b),
        g.param(t, pred.out_w),
        g.param(t, pred.out_b),
    );
    let mut candidates = Vec::with_capacity(answer_reps.len());
    let mut scores = Vec::with_capacity(answer_reps.len());
    for (j, reps) in sentence_reps.iter().enumerate() {
        let plot = g.concat_cols(reps)?;
        let (_, hq) = attend(g, question_rep, plot)?;
        let tsq = compare(g, params, &ids.compare_sentence, plot, hq)?;
        let (_, ha) = attend(g, answer_reps[j], plot)?;
        let tsa = compare(g, params, &ids.compare_sentence, plot, ha)?;
        let both = g.concat_rows(&[tsq, tsa])?;
        let plot_rep = aggregate(g, params, &ids.aggregate_sentence, both)?;
        let hidden = g.dense(plot_rep, hw, hb, Activation::Tanh)?;
        scores.push(g.dense(hidden, ow, ob, Activation::None)?);
        candidates.push(CandidateNodes {
            answer_rep: answer_reps[j],
            sentence_reps: plot,
            question_comparison: tsq,
            answer_comparison: tsa,
            plot_rep,
        });
    }
    let confidences = g.concat_rows(&scores)?;
    let probabilities = g.softmax_cols(confidences);
    Ok((candidates, confidences, probabilities))
}

/// Records the full forward pass of one instance on `g`. Passing an RNG
/// enables dropout on the embedding inputs.
pub(crate) fn build(
    g: &mut Graph,
    params: &ModelParams,
    enc: &EncodedInstance,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<ForwardNodes> {
    if enc.sentences.is_empty() {
        return Err(Error::EmptySequence("plot"));
    }
    let proj = project_inputs(g, params, enc, &mut dropout_rng)?;
    let (question_rep, answer_reps) = self_reps(g, params, &proj)?;
    let k = proj.answers.len();
    let mut sentences = Vec::with_capacity(enc.sentences.len());
    let mut sentence_reps: Vec<Vec<NodeId>> = vec![Vec::with_capacity(enc.sentences.len()); k];
    for s in &enc.sentences {
        let (nodes, reps) = word_level(g, params, &proj, s, &mut dropout_rng)?;
        for (column, r) in sentence_reps.iter_mut().zip(reps) {
            column.push(r);
        }
        sentences.push(nodes);
    }
    let (candidates, confidences, probabilities) =
        sentence_level(g, params, question_rep, &answer_reps, &sentence_reps)?;
    Ok(ForwardNodes {
        sentences,
        question_rep,
        candidates,
        confidences,
        probabilities,
    })
}

/// Word-level results of a fixed question, candidates and plot, so that
/// appending one extra sentence only costs that sentence plus the
/// sentence level. Evaluation through the cache is bit-identical to a full
/// forward over the extended plot because the word level is per sentence.
#[derive(Clone, Debug)]
pub struct WordLevelCache {
    question: Matrix,
    candidates: Vec<Matrix>,
    question_rep: Matrix,
    answer_reps: Vec<Matrix>,
    /// `sentence_reps[j][i]` is `r_p(i,j)`.
    sentence_reps: Vec<Vec<Matrix>>,
}

impl WordLevelCache {
    pub fn new(params: &ModelParams, enc: &EncodedInstance) -> Result<Self> {
        let mut g = Graph::new();
        let nodes = build(&mut g, params, enc, None)?;
        let answer_reps = nodes.candidates.iter().map(|c| g.value(c.answer_rep).clone()).collect();
        let sentence_reps = nodes
            .candidates
            .iter()
            .map(|c| {
                let plot = g.value(c.sentence_reps);
                (0..plot.cols()).map(|i| plot.columns(i, i + 1)).collect()
            })
            .collect();
        Ok(WordLevelCache {
            question: enc.question.clone(),
            candidates: enc.candidates.clone(),
            question_rep: g.value(nodes.question_rep).clone(),
            answer_reps,
            sentence_reps,
        })
    }

    /// Candidate probabilities with `extra` (embedded tokens) appended as the last sentence.
    pub fn probabilities_with(&self, params: &ModelParams, extra: &Matrix) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let enc = EncodedInstance {
            question: self.question.clone(),
            sentences: Vec::new(),
            candidates: self.candidates.clone(),
        };
        let proj = project_inputs(&mut g, params, &enc, &mut None)?;
        let (_, fresh) = word_level(&mut g, params, &proj, extra, &mut None)?;
        let question_rep = g.input(self.question_rep.clone());
        let answer_reps: Vec<NodeId> = self.answer_reps.iter().map(|m| g.input(m.clone())).collect();
        let sentence_reps: Vec<Vec<NodeId>> = self
            .sentence_reps
            .iter()
            .zip(fresh)
            .map(|(cached, new)| {
                let mut column: Vec<NodeId> = cached.iter().map(|m| g.input(m.clone())).collect();
                column.push(new);
                column
            })
            .collect();
        let (_, _, probs) = sentence_level(&mut g, params, question_rep, &answer_reps, &sentence_reps)?;
        Ok(g.value(probs).col(0))
    }
}
