use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for every parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real = f32> {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Tensor<T>], config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            assert_eq!(p.shape(), g.shape(), "gradient shape");
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                let gf = gv.as_f64();
                let mf = beta1 * mv.as_f64() + (1.0 - beta1) * gf;
                let vf = beta2 * vv.as_f64() + (1.0 - beta2) * gf * gf;
                *mv = T::of(mf);
                *vv = T::of(vf);
                let update = lr * (mf / bc1) / ((vf / bc2).sqrt() + epsilon);
                *pv = T::of(pv.as_f64() - update);
            }
        }
    }
}

/// Applies one update; see [`AdamState::step`].
pub fn adam_step<T: Real>(params: &mut [Tensor<T>], grads: &[Tensor<T>], state: &mut AdamState<T>) {
    state.step(params, grads);
}
