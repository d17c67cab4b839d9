use super::{Graph, NodeId, ParamSet};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDiffReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares reverse-mode gradients with central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every scalar in `params`.
///
/// `build` must construct the same scalar loss on a fresh graph each call.
/// Relative error uses the denominator `max(|a|, |b|, 1e-8)`.
pub fn finite_diff_check<F>(params: &mut ParamSet, epsilon: f64, build: F) -> Result<FiniteDiffReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<NodeId>,
{
    finite_diff_check_steps(params, &[epsilon], build)
}

/// Like [`finite_diff_check`], but each scalar keeps its smallest error
/// over several step sizes.
///
/// On piecewise-smooth losses no single ε works everywhere: small steps
/// drown gradients below ~1e-7 in rounding noise, and large steps can
/// straddle a ReLU or max-pool kink. A wrong gradient disagrees at every
/// step, so the per-scalar minimum still exposes it.
pub fn finite_diff_check_steps<F>(params: &mut ParamSet, steps: &[f64], build: F) -> Result<FiniteDiffReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<NodeId>,
{
    if steps.is_empty() || steps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(crate::error::Error::Config(format!("finite-difference steps must be positive, got {steps:?}")));
    }
    let mut graph = Graph::new();
    let loss = build(&mut graph, params)?;
    let grads = graph.backward(loss)?;

    let eval = |params: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, params)?;
        Ok(g.value(l).get(0, 0))
    };

    let mut report = FiniteDiffReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = params.get(id).value.len();
        for k in 0..n {
            let orig = params.get(id).value.data()[k];
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let mut rel = f64::INFINITY;
            for &epsilon in steps {
                params.get_mut(id).value.data_mut()[k] = orig + epsilon;
                let plus = eval(params)?;
                params.get_mut(id).value.data_mut()[k] = orig - epsilon;
                let minus = eval(params)?;
                params.get_mut(id).value.data_mut()[k] = orig;

                let numeric = (plus - minus) / (2.0 * epsilon);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                rel = rel.min((analytic - numeric).abs() / denom);
            }
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.get(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}
