use serde::{Deserialize, Serialize};

use super::{ParamMut, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Adam with bias correction folded into the step size. Moment buffers are
/// matched to parameters by position, so the parameter list must be
/// presented in the same order on every step.
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<ParamMut<'_, T>>) {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![T::zero(); p.value.len()], vec![T::zero(); p.value.len()]))
                .collect();
        }
        assert_eq!(self.moments.len(), params.len(), "parameter list changed");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr_t = c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let (lr_t, eps) = (T::of(lr_t), T::of(c.epsilon));
        for (p, (m, v)) in params.into_iter().zip(self.moments.iter_mut()) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                p.value[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}
