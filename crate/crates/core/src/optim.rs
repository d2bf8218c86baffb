//! AdamW with decoupled weight decay, cosine annealing, and global-norm
//! gradient clipping.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::Params;

/// Cosine-annealed learning rate: `base` at step 0, `base/2` halfway, `0` at
/// `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, base: f64) -> f64 {
    if total_steps == 0 {
        return base;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    base * (1.0 + libm::cos(core::f64::consts::PI * t)) / 2.0
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: Params>(grads: &mut P, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    grads.visit("", &mut |_, t| sq += t.sum_sq());
    let norm = libm::sqrt(sq);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.visit_mut("", &mut |_, t| t.data.iter_mut().for_each(|v| *v *= s));
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of `params` from `grads` (same architecture) at rate `lr`.
    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P, lr: f64) {
        let mut flat = Vec::new();
        grads.visit("", &mut |_, t| flat.extend_from_slice(&t.data));
        if self.m.len() != flat.len() {
            self.m = vec![0.0; flat.len()];
            self.v = vec![0.0; flat.len()];
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let decay = 1.0 - lr * c.weight_decay;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut offset = 0;
        params.visit_mut("", &mut |_, t| {
            for (i, p) in t.data.iter_mut().enumerate() {
                let k = offset + i;
                let g = flat[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *p = *p * decay - lr * mhat / (libm::sqrt(vhat) + c.eps);
            }
            offset += t.len();
        });
    }
}
