use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

/// Adam with bias correction. L2 is folded into the gradient as
/// `l2_weight · value` for tensors flagged `decay` before the moment update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2_weight: f64,
}

impl Adam {
    pub fn new(lr: f64, l2_weight: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if l2_weight < 0.0 {
            return Err(Error::Config(format!("l2 weight must be non-negative, got {l2_weight}")));
        }
        Ok(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2_weight,
        })
    }

    /// One update step over every parameter using its gradient buffer.
    pub fn step(&self, params: &mut ParamSet) {
        for t in params.iter_mut() {
            t.step_count += 1;
            let step = t.step_count as i32;
            let c1 = 1.0 - self.beta1.powi(step);
            let c2 = 1.0 - self.beta2.powi(step);
            let decay = if t.decay { self.l2_weight } else { 0.0 };
            let values = t.value.data_mut();
            let grads = t.gradient.data();
            let ms = t.adam_m.data_mut();
            let vs = t.adam_v.data_mut();
            for i in 0..values.len() {
                let g = grads[i] + decay * values[i];
                ms[i] = self.beta1 * ms[i] + (1.0 - self.beta1) * g;
                vs[i] = self.beta2 * vs[i] + (1.0 - self.beta2) * g * g;
                let m_hat = ms[i] / c1;
                let v_hat = vs[i] / c2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Convenience wrapper: one Adam step with the given hyperparameters.
pub fn adam_update(params: &mut ParamSet, lr: f64, l2_weight: f64) -> Result<()> {
    Adam::new(lr, l2_weight)?.step(params);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Matrix, ParamTensor};

    fn single(value: Matrix, decay: bool) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add(ParamTensor::new("w", value, decay));
        ps
    }

    #[test]
    fn zero_gradient_leaves_params_alone() {
        let init = Matrix::from_rows(&[&[0.3, -1.0], &[2.0, 0.0]]);
        let mut ps = single(init.clone(), true);
        adam_update(&mut ps, 0.01, 0.0).unwrap();
        assert_eq!(ps.iter().next().unwrap().1.value, init);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g² on the first step, so the move is lr·g/(|g| + eps).
        let init = Matrix::filled(3, 2, 0.5);
        let mut ps = single(init.clone(), true);
        ps.iter_mut().next().unwrap().gradient.fill(1.0);
        let lr = 0.001;
        adam_update(&mut ps, lr, 0.0).unwrap();
        for (after, before) in ps.iter().next().unwrap().1.value.data().iter().zip(init.data()) {
            assert!(((before - after) - lr).abs() < 1e-6);
        }
    }

    #[test]
    fn table_learning_rates_accepted_and_nonpositive_rejected() {
        assert!(Adam::new(0.001, 0.0001).is_ok());
        assert!(Adam::new(0.0025, 0.0001).is_ok());
        assert!(matches!(Adam::new(0.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(Adam::new(-1.0, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn l2_skips_biases() {
        let mut ps = ParamSet::new();
        ps.add(ParamTensor::new("w", Matrix::filled(1, 1, 1.0), true));
        ps.add(ParamTensor::new("b", Matrix::filled(1, 1, 1.0), false));
        adam_update(&mut ps, 0.1, 0.5).unwrap();
        let vals: Vec<f64> = ps.iter().map(|(_, t)| t.value.get(0, 0)).collect();
        assert!(vals[0] < 1.0);
        assert_eq!(vals[1], 1.0);
    }
}
