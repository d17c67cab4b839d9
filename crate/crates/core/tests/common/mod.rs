#![allow(dead_code)]

pub mod grad;

use hcar::corpus::EncodedInstance;
use hcar::model::{argmax, Aggregator, ForwardTrace, ModelConfig, ModelParams};
use hcar::numeric::{rng_from_seed, Matrix, Rng};
use rand::Rng as _;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Random encoded instance with `k` candidates and `n` sentences.
pub fn random_instance(dim: usize, n: usize, k: usize, rng: &mut Rng) -> EncodedInstance {
    let seq = |max: usize, rng: &mut Rng| {
        let len = rng.random_range(1..=max);
        random_matrix(dim, len, rng)
    };
    EncodedInstance {
        question: seq(5, rng),
        sentences: (0..n).map(|_| seq(6, rng)).collect(),
        candidates: (0..k).map(|_| seq(3, rng)).collect(),
    }
}

/// A deliberately small network so that per-scalar checks stay cheap.
pub fn tiny_config(aggregator: Aggregator, seed: u64) -> ModelConfig {
    ModelConfig {
        hidden: 3,
        conv_channels: 2,
        conv_widths: vec![1, 3],
        dense_size: 3,
        ..ModelConfig::toy(aggregator, 4, seed)
    }
}

/// Initialized parameters with non-zero biases, so no unit starts exactly
/// at a ReLU kink or with a zero-bias symmetry.
pub fn tiny_model(aggregator: Aggregator, seed: u64) -> ModelParams {
    let mut params = ModelParams::init(&tiny_config(aggregator, seed)).unwrap();
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    for t in params.tensors.iter_mut() {
        if !t.decay {
            t.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
    }
    params
}

pub fn toy_model(aggregator: Aggregator, seed: u64) -> ModelParams {
    ModelParams::init(&ModelConfig::toy(aggregator, 16, seed)).unwrap()
}

fn columns_sum_to_one(m: &Matrix, tol: f64) -> bool {
    (0..m.cols()).all(|c| (m.col(c).iter().sum::<f64>() - 1.0).abs() < tol)
}

/// Shape and normalization laws of a forward trace; the first violation
/// found is returned as a message.
pub fn trace_violation(params: &ModelParams, enc: &EncodedInstance, t: &ForwardTrace, tol: f64) -> Option<String> {
    let (n, k) = (enc.sentences.len(), enc.candidates.len());
    let width = params.config.aggregate_width();
    let fail = |what: &str| Some(what.to_string());
    if t.probabilities.len() != k || (t.probabilities.iter().sum::<f64>() - 1.0).abs() >= tol {
        return fail("candidate probabilities do not sum to one");
    }
    if !t.probabilities.iter().all(|p| (0.0..=1.0).contains(p)) {
        return fail("probability outside [0, 1]");
    }
    if t.selected != argmax(&t.probabilities) || t.relevance != t.relevance_for(t.conditioned_on) {
        return fail("selection or relevance inconsistent with probabilities");
    }
    if t.question_rep.len() != width || t.num_sentences() != n {
        return fail("question representation or sentence count");
    }
    for (s, plot) in t.sentences.iter().zip(&enc.sentences) {
        let m = plot.cols();
        if s.question_attention.shape() != (enc.question.cols(), m) || !columns_sum_to_one(&s.question_attention, tol) {
            return fail("question attention");
        }
        if s.question_comparison.shape() != (params.config.hidden, m) || s.question_comparison.data().iter().any(|&v| v < 0.0) {
            return fail("word-level question comparison");
        }
        for ((ga, ta), a) in s.answer_attention.iter().zip(&s.answer_comparison).zip(&enc.candidates) {
            if ga.shape() != (a.cols(), m) || !columns_sum_to_one(ga, tol) || ta.shape() != (params.config.hidden, m) {
                return fail("answer attention or comparison");
            }
        }
    }
    for (j, c) in t.candidates.iter().enumerate() {
        let shapes = [c.sentence_reps.shape(), c.question_comparison.shape(), c.answer_comparison.shape()];
        if shapes.iter().any(|&s| s != (width, n)) || c.plot_rep.len() != width || c.answer_rep.len() != width {
            return fail("sentence-level shapes");
        }
        let rel = t.relevance_for(j);
        if rel.len() != n || rel.iter().any(|&r| r < 0.0) {
            return fail("relevance scores");
        }
        if (0..n).any(|i| t.word_importance(i, j).len() != enc.sentences[i].cols()) {
            return fail("word importance length");
        }
    }
    None
}
