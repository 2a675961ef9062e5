use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Adaptive-moment gradient descent over a [`ParamStore`].
pub struct Adam<T> {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = |p: &Tensor<T>| {
            let (r, c) = p.rows_cols();
            Tensor::zeros(r, c)
        };
        Adam {
            cfg,
            step: 0,
            m: store.iter().map(|(_, p)| zeros(&p.value)).collect(),
            v: store.iter().map(|(_, p)| zeros(&p.value)).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update from the accumulated gradients, then clear them.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let t = self.step as f64;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let c1 = T::from_f64(1.0 - self.cfg.beta1.powf(t));
        let c2 = T::from_f64(1.0 - self.cfg.beta2.powf(t));
        let lr = T::from_f64(self.cfg.lr);
        let eps = T::from_f64(self.cfg.eps);
        let wd = T::from_f64(self.cfg.weight_decay);
        for (i, p) in store.iter_mut().enumerate() {
            if p.frozen {
                p.grad.fill(T::zero());
                continue;
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let values = p.value.data_mut();
            for (k, &g0) in p.grad.data().iter().enumerate() {
                let g = g0 + wd * values[k];
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                values[k] = values[k] - lr * mhat / (vhat.sqrt() + eps);
            }
            p.grad.fill(T::zero());
        }
    }
}
