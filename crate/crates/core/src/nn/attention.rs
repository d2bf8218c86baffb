use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{join, Linear, Params};
use crate::tensor::{Tensor, TokenSequence};

/// Multi-head self-attention restricted to consecutive groups of tokens.
///
/// With `group == count` this is ordinary global attention; smaller groups
/// give independent attention inside each group with shared weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub dim: usize,
    pub heads: usize,
    pub qkv: Linear,
    pub proj: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: TokenSequence,
    qkv: TokenSequence,
    /// Row-stochastic matrices, indexed `((group·heads + head)·S + i)·S + j`.
    probs: Vec<f64>,
    context: TokenSequence,
    group: usize,
}

impl AttentionCache {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        let mut proj = Linear::new(dim, dim, rng);
        proj.weight.zero_();
        Attention { dim, heads, qkv: Linear::new(dim, 3 * dim, rng), proj }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward(&self, x: &TokenSequence, group: usize) -> (TokenSequence, AttentionCache) {
        debug_assert!(group > 0 && x.count % group == 0);
        let (d, dh) = (self.dim, self.head_dim());
        let scale = 1.0 / libm::sqrt(dh as f64);
        let qkv = self.qkv.forward(x);
        let groups = x.count / group;
        let mut probs = vec![0.0; groups * self.heads * group * group];
        let mut context = TokenSequence::zeros(x.count, d);
        let mut scores = vec![0.0; group];
        for g in 0..groups {
            let base = g * group;
            for h in 0..self.heads {
                let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                for i in 0..group {
                    let q = &qkv.token(base + i)[qo..qo + dh];
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in scores.iter_mut().enumerate() {
                        let k = &qkv.token(base + j)[ko..ko + dh];
                        *s = scale * q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(*s);
                    }
                    let mut sum = 0.0;
                    for s in scores.iter_mut() {
                        *s = libm::exp(*s - max);
                        sum += *s;
                    }
                    let row = &mut probs[((g * self.heads + h) * group + i) * group..][..group];
                    for (p, s) in row.iter_mut().zip(&scores) {
                        *p = s / sum;
                    }
                    let ctx = &mut context.token_mut(base + i)[qo..qo + dh];
                    for (j, &p) in row.iter().enumerate() {
                        let v = &qkv.token(base + j)[vo..vo + dh];
                        for (c, vv) in ctx.iter_mut().zip(v) {
                            *c += p * vv;
                        }
                    }
                }
            }
        }
        let out = self.proj.forward(&context);
        (out, AttentionCache { input: x.clone(), qkv, probs, context, group })
    }

    pub fn backward(&self, cache: &AttentionCache, grad_out: &TokenSequence, grads: &mut Attention) -> TokenSequence {
        let (d, dh, group) = (self.dim, self.head_dim(), cache.group);
        let scale = 1.0 / libm::sqrt(dh as f64);
        let gctx = self.proj.backward(&cache.context, grad_out, &mut grads.proj);
        let qkv = &cache.qkv;
        let mut gqkv = TokenSequence::zeros(qkv.count, 3 * d);
        let groups = qkv.count / group;
        let mut dp = vec![0.0; group];
        for g in 0..groups {
            let base = g * group;
            for h in 0..self.heads {
                let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                for i in 0..group {
                    let row = &cache.probs[((g * self.heads + h) * group + i) * group..][..group];
                    let gc = &gctx.token(base + i)[qo..qo + dh];
                    for (j, dpj) in dp.iter_mut().enumerate() {
                        let v = &qkv.token(base + j)[vo..vo + dh];
                        *dpj = gc.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                        let gv = &mut gqkv.token_mut(base + j)[vo..vo + dh];
                        for (o, c) in gv.iter_mut().zip(gc) {
                            *o += row[j] * c;
                        }
                    }
                    let inner: f64 = row.iter().zip(&dp).map(|(p, q)| p * q).sum();
                    for j in 0..group {
                        let ds = row[j] * (dp[j] - inner) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let (ti, tj) = (base + i, base + j);
                        for c in 0..dh {
                            let kjc = qkv.token(tj)[ko + c];
                            let qic = qkv.token(ti)[qo + c];
                            gqkv.token_mut(ti)[qo + c] += ds * kjc;
                            gqkv.token_mut(tj)[ko + c] += ds * qic;
                        }
                    }
                }
            }
        }
        self.qkv.backward(&cache.input, &gqkv, &mut grads.qkv)
    }
}

impl Params for Attention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.qkv.visit(&join(prefix, "qkv"), f);
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.qkv.visit_mut(&join(prefix, "qkv"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}
