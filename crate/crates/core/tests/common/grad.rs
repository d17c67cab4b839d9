//! Gradient-check fixtures shared by the gradient tests and the acceptance run.

use hcar::model::{loss_graph, Aggregator};
use hcar::numeric::{
    finite_diff_check_steps, rng_from_seed, Activation, FiniteDiffReport, Graph, Matrix, NodeId,
    ParamId, ParamSet, ParamTensor, Rng,
};
use hcar::Result;
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{random_instance, random_matrix, tiny_model};

pub const TOL: f64 = 1e-4;
/// Tiny gradients drown in rounding noise at small steps while large
/// steps can straddle a kink, so each scalar is judged by its best step;
/// see `finite_diff_check_steps`.
pub const PRIMITIVE_STEPS: [f64; 3] = [1e-6, 1e-5, 1e-4];
pub const MODEL_STEPS: [f64; 3] = [1e-5, 1e-4, 3e-4];

/// `sum(node ⊙ R)` for a fixed random `R`, so every output entry receives
/// a distinct upstream gradient.
pub fn weighted_sum(g: &mut Graph, node: NodeId, seed: u64) -> Result<NodeId> {
    let (r, c) = g.value(node).shape();
    let weights = g.input(random_matrix(r, c, &mut rng_from_seed(seed)));
    let prod = g.mul(node, weights)?;
    Ok(g.sum(prod))
}

pub fn tensors(shapes: &[(usize, usize)], rng: &mut Rng) -> (ParamSet, Vec<ParamId>) {
    let mut ps = ParamSet::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| ps.add(ParamTensor::new(format!("t{i}"), random_matrix(r, c, rng), true)))
        .collect();
    (ps, ids)
}

/// Entries at least 0.05 from zero and, within a row, well apart from each
/// other, so ReLU and max-pool are smooth within every finite-difference step.
pub fn kink_free(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let mut slots: Vec<usize> = (0..cols).collect();
        slots.shuffle(rng);
        for (c, &slot) in slots.iter().enumerate() {
            let t = (slot as f64 + rng.random_range(0.25..0.75)) / cols as f64;
            let v = 2.0 * t - 1.0;
            m.set(r, c, if v.abs() < 0.05 { 0.05f64.copysign(v) } else { v });
        }
    }
    m
}

/// Checks every primitive on shapes `r × k`, `k × c`, `r × c` drawn from one seed.
pub fn primitive_reports(seed: u64, r: usize, c: usize, k: usize) -> Vec<(&'static str, FiniteDiffReport)> {
    let mut out = Vec::new();
    let mut check = |name: &'static str, ps: &mut ParamSet, build: &dyn Fn(&mut Graph, &ParamSet) -> Result<NodeId>| {
        out.push((name, finite_diff_check_steps(ps, &PRIMITIVE_STEPS, build).unwrap()));
    };
    let mut rng = rng_from_seed(seed);
    let ws = seed.wrapping_add(1);

    let (mut ps, ids) = tensors(&[(r, k), (k, c)], &mut rng);
    let (a, b) = (ids[0], ids[1]);
    check("matmul", &mut ps, &|g, p| {
        let (a, b) = (g.param(p, a), g.param(p, b));
        let m = g.matmul(a, b)?;
        weighted_sum(g, m, ws)
    });

    let (mut ps, ids) = tensors(&[(r, c), (r, c)], &mut rng);
    let (x, y) = (ids[0], ids[1]);
    ps.get_mut(x).value = kink_free(r, c, &mut rng);
    check("transpose", &mut ps, &|g, p| {
        let x = g.param(p, x);
        let t = g.transpose(x);
        weighted_sum(g, t, ws)
    });
    check("add/sub/mul", &mut ps, &|g, p| {
        let (x, y) = (g.param(p, x), g.param(p, y));
        let s = g.add(x, y)?;
        let d = g.sub(s, x)?;
        let m = g.mul(d, x)?;
        weighted_sum(g, m, ws)
    });
    check("self-product", &mut ps, &|g, p| {
        let x = g.param(p, x);
        let sq = g.mul(x, x)?;
        weighted_sum(g, sq, ws)
    });
    check("activations", &mut ps, &|g, p| {
        let x = g.param(p, x);
        let parts = [g.tanh(x), g.sigmoid(x), g.relu(x)];
        let cat = g.concat_rows(&parts)?;
        weighted_sum(g, cat, ws)
    });
    check("concat_cols", &mut ps, &|g, p| {
        let (x, y) = (g.param(p, x), g.param(p, y));
        let cat = g.concat_cols(&[x, y, x])?;
        weighted_sum(g, cat, ws)
    });
    check("softmax_cols", &mut ps, &|g, p| {
        let x = g.param(p, x);
        let s = g.softmax_cols(x);
        weighted_sum(g, s, ws)
    });
    check("max_pool_time", &mut ps, &|g, p| {
        let x = g.param(p, x);
        let m = g.max_pool_time(x)?;
        weighted_sum(g, m, ws)
    });
    let mask = Matrix::new(r, c, (0..r * c).map(|_| if rng.random_bool(0.7) { 1.0 / 0.7 } else { 0.0 }).collect()).unwrap();
    check("dropout", &mut ps, &|g, p| {
        let x = g.param(p, x);
        let d = g.dropout(x, mask.clone())?;
        weighted_sum(g, d, ws)
    });

    let (mut ps, ids) = tensors(&[(r, c), (r, 1), (r, k), (r, 1)], &mut rng);
    check("add_bias/scale", &mut ps, &|g, p| {
        let (x, b) = (g.param(p, ids[0]), g.param(p, ids[1]));
        let s = g.add_bias(x, b)?;
        let s = g.scale(s, -1.7);
        weighted_sum(g, s, ws)
    });
    let (mut dps, dids) = tensors(&[(r, k), (k, c), (r, 1)], &mut rng);
    check("dense", &mut dps, &|g, p| {
        let (w, x, b) = (g.param(p, dids[0]), g.param(p, dids[1]), g.param(p, dids[2]));
        let d = g.dense(x, w, b, Activation::Sigmoid)?;
        weighted_sum(g, d, ws)
    });
    let gold = rng.random_range(0..r);
    check("nll", &mut ps, &|g, p| {
        let logits = g.param(p, ids[3]);
        let scaled = g.scale(logits, 3.0);
        g.nll(scaled, gold)
    });

    for width in [1, 3, 5] {
        let (mut ps, ids) = tensors(&[(r, c), (k, width * r), (k, 1)], &mut rng);
        check(["conv1d/1", "conv1d/3", "conv1d/5"][width / 2], &mut ps, &|g, p| {
            let (x, w, b) = (g.param(p, ids[0]), g.param(p, ids[1]), g.param(p, ids[2]));
            let y = g.conv1d(x, w, b, width)?;
            weighted_sum(g, y, ws)
        });
    }

    let h = k;
    let (mut ps, ids) = tensors(&[(r, c), (4 * h, r + h), (4 * h, 1)], &mut rng);
    check("lstm", &mut ps, &|g, p| {
        let (x, w, b) = (g.param(p, ids[0]), g.param(p, ids[1]), g.param(p, ids[2]));
        let y = g.lstm(x, w, b)?;
        weighted_sum(g, y, ws)
    });
    out
}

/// Full-model check on random instance `i`; every scalar parameter is covered.
pub fn model_report(aggregator: Aggregator, i: u64) -> FiniteDiffReport {
    let params = tiny_model(aggregator, 100 + i);
    let mut rng = rng_from_seed(200 + i);
    let n = rng.random_range(1..=3);
    let enc = random_instance(params.config.embedding_dim, n, 5, &mut rng);
    let gold = rng.random_range(0..5);
    let mut tensors = params.tensors.clone();
    let report = finite_diff_check_steps(&mut tensors, &MODEL_STEPS, |g, ps| {
        let mut p = params.clone();
        p.tensors = ps.clone();
        let (graph, loss) = loss_graph(&p, &enc, gold, None)?;
        *g = graph;
        Ok(loss)
    })
    .unwrap();
    assert_eq!(report.checked, params.tensors.scalar_count());
    report
}
