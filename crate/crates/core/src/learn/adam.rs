//! Adam with externally visible (and resettable) moment estimates.

use serde::{Deserialize, Serialize};

use super::mlp::Parameters;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<P> {
    pub first_moment: P,
    pub second_moment: P,
    pub step_count: u64,
    pub learning_rate: f64,
    /// Rate the run started with; decays scale this, not the current rate.
    pub initial_learning_rate: f64,
}

impl<P: Parameters> OptimizerState<P> {
    pub fn new(params: &P, learning_rate: f64) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
            learning_rate,
            initial_learning_rate: learning_rate,
        }
    }

    /// Clears both moments and the bias-correction counter.
    pub fn reset_moments(&mut self) {
        for t in self.first_moment.tensors_mut() {
            t.fill(0.0);
        }
        for t in self.second_moment.tensors_mut() {
            t.fill(0.0);
        }
        self.step_count = 0;
    }

    pub fn moments_are_zero(&self) -> bool {
        self.first_moment
            .tensors()
            .iter()
            .chain(self.second_moment.tensors().iter())
            .all(|t| t.iter().all(|v| *v == 0.0))
    }

    /// One bias-corrected step: `θ ← θ − η m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut P, grads: &P) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let lr = self.learning_rate;
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.first_moment.tensors_mut();
        let vs = self.second_moment.tensors_mut();
        assert_eq!(ps.len(), gs.len(), "parameter/gradient layout mismatch");
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            assert_eq!(p.len(), g.len(), "parameter/gradient shape mismatch");
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

/// Free-function form of [`OptimizerState::step`].
pub fn adam_step<P: Parameters>(opt: &mut OptimizerState<P>, params: &mut P, grads: &P) {
    opt.step(params, grads);
}
