use alloc::vec::Vec;

use super::{join, Params};
use crate::tensor::{Tensor, TokenSequence};

const EPS: f64 = 1e-6;

/// Per-token layer normalization with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub dim: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: TokenSequence,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { dim, gamma: Tensor::filled(&[dim], 1.0), beta: Tensor::zeros(&[dim]) }
    }

    pub fn forward(&self, x: &TokenSequence) -> (TokenSequence, LayerNormCache) {
        let d = self.dim;
        let mut xhat = TokenSequence::zeros(x.count, d);
        let mut y = TokenSequence::zeros(x.count, d);
        let mut rstd = Vec::with_capacity(x.count);
        for i in 0..x.count {
            let row = x.token(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / libm::sqrt(var + EPS);
            rstd.push(r);
            let xh = xhat.token_mut(i);
            for (o, v) in xh.iter_mut().zip(row) {
                *o = (v - mean) * r;
            }
            let xh = xhat.token(i).to_vec();
            for (j, o) in y.token_mut(i).iter_mut().enumerate() {
                *o = xh[j] * self.gamma.data[j] + self.beta.data[j];
            }
        }
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&self, cache: &LayerNormCache, grad_out: &TokenSequence, grads: &mut LayerNorm) -> TokenSequence {
        let d = self.dim;
        let n = grad_out.count;
        let mut gx = TokenSequence::zeros(n, d);
        let mut gxhat = alloc::vec![0.0; d];
        for i in 0..n {
            let gy = grad_out.token(i);
            let xh = cache.xhat.token(i);
            for j in 0..d {
                grads.gamma.data[j] += gy[j] * xh[j];
                grads.beta.data[j] += gy[j];
                gxhat[j] = gy[j] * self.gamma.data[j];
            }
            let mean_g = gxhat.iter().sum::<f64>() / d as f64;
            let mean_gx = gxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let r = cache.rstd[i];
            for (j, o) in gx.token_mut(i).iter_mut().enumerate() {
                *o = r * (gxhat[j] - mean_g - xh[j] * mean_gx);
            }
        }
        gx
    }
}

impl Params for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}
