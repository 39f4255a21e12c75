use super::model::Params;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer over the real and imaginary parts of every
/// parameter independently.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    /// First moments, stored as `m_re + j m_im`.
    pub first: Params,
    /// Second moments, stored as `v_re + j v_im`.
    pub second: Params,
    pub steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Params) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grad: &Params) {
        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        let upd = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        let grads = grad.named();
        for ((((_, p), (_, m)), (_, v)), (_, g)) in params
            .named_mut()
            .into_iter()
            .zip(self.first.named_mut())
            .zip(self.second.named_mut())
            .zip(grads)
        {
            for i in 0..p.len() {
                upd(&mut p[i].re, g[i].re, &mut m[i].re, &mut v[i].re);
                upd(&mut p[i].im, g[i].im, &mut m[i].im, &mut v[i].im);
            }
        }
    }
}

/// Scales `grad` in place so its global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grad: &mut Params, max_norm: f64) -> f64 {
    let norm = grad.norm();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for (_, v) in grad.named_mut() {
            v.iter_mut().for_each(|c| *c *= s);
        }
    }
    norm
}
