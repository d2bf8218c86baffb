use rand::Rng;

use super::{init, join, Params};
use crate::tensor::{self, Tensor, TokenSequence};

/// Per-token affine map `y = x W + b`, `W` stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear { in_dim, out_dim, weight: Tensor::zeros(&[in_dim, out_dim]), bias: Tensor::zeros(&[out_dim]) }
    }

    /// Truncated-normal weights (std 0.02), zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(in_dim, out_dim);
        init::truncated_normal(&mut l.weight, 0.02, rng);
        l
    }

    pub fn forward(&self, x: &TokenSequence) -> TokenSequence {
        debug_assert_eq!(x.dim, self.in_dim);
        let mut data = tensor::matmul(&x.data, &self.weight.data, x.count, self.in_dim, self.out_dim);
        for row in data.chunks_exact_mut(self.out_dim) {
            for (o, b) in row.iter_mut().zip(&self.bias.data) {
                *o += b;
            }
        }
        TokenSequence { count: x.count, dim: self.out_dim, data }
    }

    pub fn backward(&self, x: &TokenSequence, grad_out: &TokenSequence, grads: &mut Linear) -> TokenSequence {
        tensor::matmul_at_b_acc(&mut grads.weight.data, &x.data, &grad_out.data, x.count, self.in_dim, self.out_dim);
        for row in grad_out.data.chunks_exact(self.out_dim) {
            for (g, r) in grads.bias.data.iter_mut().zip(row) {
                *g += r;
            }
        }
        let data = tensor::matmul_a_bt(&grad_out.data, &self.weight.data, x.count, self.out_dim, self.in_dim);
        TokenSequence { count: x.count, dim: self.in_dim, data }
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
