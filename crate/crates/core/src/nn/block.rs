use rand::Rng;

use super::{join, Attention, AttentionCache, LayerNorm, LayerNormCache, Linear, Params};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, TokenSequence};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(GELU_C * (x + 0.044715 * x * x * x)))
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let t = libm::tanh(GELU_C * (x + 0.044715 * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Params for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}

/// Pre-norm transformer block:
/// `x' = x + MSA(LN(x))`, `y = x' + MLP(LN(x'))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBlock {
    pub norm1: LayerNorm,
    pub attn: Attention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct TransformerBlockCache {
    norm1: LayerNormCache,
    attn: AttentionCache,
    norm2: LayerNormCache,
    normed2: TokenSequence,
    hidden: TokenSequence,
    activated: TokenSequence,
}

impl TransformerBlockCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attn
    }
}

impl TransformerBlock {
    /// Both residual branches start with zero output projections, so a fresh
    /// block is the identity.
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, mlp_ratio: usize, rng: &mut R) -> Self {
        let hidden = dim * mlp_ratio;
        let mut fc2 = Linear::new(hidden, dim, rng);
        fc2.weight.zero_();
        TransformerBlock {
            norm1: LayerNorm::new(dim),
            attn: Attention::new(dim, heads, rng),
            norm2: LayerNorm::new(dim),
            mlp: Mlp { fc1: Linear::new(dim, hidden, rng), fc2 },
        }
    }

    pub fn dim(&self) -> usize {
        self.norm1.dim
    }

    pub fn forward(&self, x: &TokenSequence, group: usize) -> Result<(TokenSequence, TransformerBlockCache)> {
        let (normed1, norm1) = self.norm1.forward(x);
        let (a, attn) = self.attn.forward(&normed1, group);
        let mut mid = x.clone();
        mid.data.iter_mut().zip(&a.data).for_each(|(m, v)| *m += v);
        let (normed2, norm2) = self.norm2.forward(&mid);
        let hidden = self.mlp.fc1.forward(&normed2);
        let mut activated = hidden.clone();
        activated.data.iter_mut().for_each(|v| *v = gelu(*v));
        let m = self.mlp.fc2.forward(&activated);
        let mut out = mid;
        out.data.iter_mut().zip(&m.data).for_each(|(o, v)| *o += v);
        if !out.is_finite() {
            return Err(Error::Numerical("non-finite transformer activation".into()));
        }
        Ok((out, TransformerBlockCache { norm1, attn, norm2, normed2, hidden, activated }))
    }

    pub fn backward(
        &self,
        cache: &TransformerBlockCache,
        grad_out: &TokenSequence,
        grads: &mut TransformerBlock,
    ) -> TokenSequence {
        let g_act = self.mlp.fc2.backward(&cache.activated, grad_out, &mut grads.mlp.fc2);
        let mut g_hidden = g_act;
        g_hidden
            .data
            .iter_mut()
            .zip(&cache.hidden.data)
            .for_each(|(g, &h)| *g *= gelu_grad(h));
        let g_normed2 = self.mlp.fc1.backward(&cache.normed2, &g_hidden, &mut grads.mlp.fc1);
        let g_from_norm2 = self.norm2.backward(&cache.norm2, &g_normed2, &mut grads.norm2);
        let mut g_mid = grad_out.clone();
        g_mid.data.iter_mut().zip(&g_from_norm2.data).for_each(|(a, b)| *a += b);

        let g_normed1 = self.attn.backward(&cache.attn, &g_mid, &mut grads.attn);
        let g_from_norm1 = self.norm1.backward(&cache.norm1, &g_normed1, &mut grads.norm1);
        let mut gx = g_mid;
        gx.data.iter_mut().zip(&g_from_norm1.data).for_each(|(a, b)| *a += b);
        gx
    }
}

impl Params for TransformerBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
        self.mlp.visit(&join(prefix, "mlp"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
        self.mlp.visit_mut(&join(prefix, "mlp"), f);
    }
}
