//! Two-granularity transformer branch: a shared-weight fine-grained
//! transformer over sub-patch tokens, a global transformer over patch tokens,
//! and per-layer injection of local outputs into their parent patch token.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::patch::{fold_tokens, patchify_global, patchify_local, unfold_tokens};
use super::{InjectionMode, ModelConfig, PatchConfig};
use crate::error::{Error, Result};
use crate::image::Plane;
use crate::nn::{init, join, Linear, Params, TransformerBlock, TransformerBlockCache};
use crate::tensor::{FeatureMap, Tensor, TokenSequence};

/// Per-token affine projection followed by a learned positional table.
/// Token `i` receives row `i mod positions` of the table.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbedding {
    pub proj: Linear,
    pub pos: Tensor,
}

impl PatchEmbedding {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, dim: usize, positions: usize, rng: &mut R) -> Self {
        let mut pos = Tensor::zeros(&[positions, dim]);
        init::truncated_normal(&mut pos, 0.02, rng);
        PatchEmbedding { proj: Linear::new(in_dim, dim, rng), pos }
    }

    pub fn positions(&self) -> usize {
        self.pos.shape[0]
    }

    pub fn forward(&self, x: &TokenSequence) -> TokenSequence {
        let mut y = self.proj.forward(x);
        let (positions, dim) = (self.positions(), y.dim);
        for i in 0..y.count {
            let p = &self.pos.data[(i % positions) * dim..][..dim];
            y.token_mut(i).iter_mut().zip(p).for_each(|(o, v)| *o += v);
        }
        y
    }

    fn backward(&self, x: &TokenSequence, grad_out: &TokenSequence, grads: &mut PatchEmbedding) {
        let (positions, dim) = (self.positions(), grad_out.dim);
        for i in 0..grad_out.count {
            let g = grad_out.token(i);
            grads.pos.data[(i % positions) * dim..][..dim]
                .iter_mut()
                .zip(g)
                .for_each(|(o, v)| *o += v);
        }
        let _ = self.proj.backward(x, grad_out, &mut grads.proj);
    }
}

impl Params for PatchEmbedding {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.proj.visit(&join(prefix, "proj"), f);
        f(&join(prefix, "pos"), &self.pos);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.proj.visit_mut(&join(prefix, "proj"), f);
        f(&join(prefix, "pos"), &mut self.pos);
    }
}

/// Adds the affinely mapped concatenation of each patch's local tokens to
/// that patch's global token.
pub fn inject_local(global: &TokenSequence, local: &TokenSequence, inject: &Linear) -> Result<TokenSequence> {
    if global.count == 0 || local.count % global.count != 0 {
        return Err(Error::shape(format!(
            "{} local tokens cannot be grouped under {} global tokens",
            local.count, global.count
        )));
    }
    let grouped = local.regroup(local.count / global.count)?;
    if grouped.dim != inject.in_dim || global.dim != inject.out_dim {
        return Err(Error::shape(format!(
            "injection expects {}→{}, got {}→{}",
            inject.in_dim, inject.out_dim, grouped.dim, global.dim
        )));
    }
    let mut out = global.clone();
    let mapped = inject.forward(&grouped);
    out.data.iter_mut().zip(&mapped.data).for_each(|(o, v)| *o += v);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayer {
    /// Fine-grained block shared by all patches.
    pub local: Option<TransformerBlock>,
    pub inject: Option<Linear>,
    pub global: TransformerBlock,
}

impl Params for TransformerLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        if let Some(b) = &self.local {
            b.visit(&join(prefix, "local"), f);
        }
        if let Some(l) = &self.inject {
            l.visit(&join(prefix, "inject"), f);
        }
        self.global.visit(&join(prefix, "global"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        if let Some(b) = &mut self.local {
            b.visit_mut(&join(prefix, "local"), f);
        }
        if let Some(l) = &mut self.inject {
            l.visit_mut(&join(prefix, "inject"), f);
        }
        self.global.visit_mut(&join(prefix, "global"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModule {
    pub patch: PatchConfig,
    pub channels: usize,
    pub local_embed: PatchEmbedding,
    pub global_embed: PatchEmbedding,
    pub layers: Vec<TransformerLayer>,
    /// Maps each final global token to `channels · P_G²` values.
    pub head: Linear,
}

struct LayerCache {
    local: Option<TransformerBlockCache>,
    /// Local tokens after this layer's fine-grained block (injection input).
    local_out: Option<TokenSequence>,
    global: TransformerBlockCache,
}

pub struct TransformerCache {
    local_in: TokenSequence,
    global_in: TokenSequence,
    layers: Vec<LayerCache>,
    global_out: TokenSequence,
}

impl TransformerModule {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let p = cfg.patch;
        let subs = p.sub_patches_per_patch();
        let (dl, dg) = (cfg.token_dim_local, cfg.token_dim_global);
        let local_embed = PatchEmbedding::new(p.local_patch * p.local_patch, dl, subs, rng);
        let global_embed = PatchEmbedding::new(p.global_patch * p.global_patch, dg, p.global_tokens(), rng);
        let layers = (0..cfg.depth)
            .map(|l| {
                let has_local = l == 0 || cfg.injection == InjectionMode::EveryLayer;
                TransformerLayer {
                    local: has_local.then(|| TransformerBlock::new(dl, cfg.heads, cfg.mlp_ratio, rng)),
                    inject: has_local.then(|| Linear::new(subs * dl, dg, rng)),
                    global: TransformerBlock::new(dg, cfg.heads, cfg.mlp_ratio, rng),
                }
            })
            .collect();
        let head = Linear::new(dg, cfg.trans_channels * p.global_patch * p.global_patch, rng);
        TransformerModule { patch: p, channels: cfg.trans_channels, local_embed, global_embed, layers, head }
    }

    pub fn forward(&self, img: &Plane) -> Result<FeatureMap> {
        self.forward_cached(img).map(|(f, _)| f)
    }

    pub fn forward_cached(&self, img: &Plane) -> Result<(FeatureMap, TransformerCache)> {
        let local_in = patchify_local(img, &self.patch)?;
        let global_in = patchify_global(img, &self.patch)?;
        let mut local = self.local_embed.forward(&local_in);
        let mut global = self.global_embed.forward(&global_in);
        let subs = self.patch.sub_patches_per_patch();
        let n_global = self.patch.global_tokens();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut lc = None;
            let mut local_out = None;
            if let Some(block) = &layer.local {
                let (out, c) = block.forward(&local, subs)?;
                local = out;
                lc = Some(c);
            }
            if let Some(inject) = &layer.inject {
                global = inject_local(&global, &local, inject)?;
                local_out = Some(local.clone());
            }
            let (out, gc) = layer.global.forward(&global, n_global)?;
            global = out;
            caches.push(LayerCache { local: lc, local_out, global: gc });
        }
        let tokens = self.head.forward(&global);
        let map = fold_tokens(&tokens, &self.patch, self.channels)?;
        if !map.is_finite() {
            return Err(Error::Numerical("non-finite transformer output".into()));
        }
        Ok((map, TransformerCache { local_in, global_in, layers: caches, global_out: global }))
    }

    pub fn backward(&self, cache: &TransformerCache, grad_out: &FeatureMap, grads: &mut TransformerModule) -> Result<()> {
        let g_tokens = unfold_tokens(grad_out, &self.patch)?;
        let mut g_global = self.head.backward(&cache.global_out, &g_tokens, &mut grads.head);
        let subs = self.patch.sub_patches_per_patch();
        let mut g_local = TokenSequence::zeros(cache.local_in.count, self.local_embed.proj.out_dim);
        for ((layer, lc), lg) in self.layers.iter().zip(&cache.layers).zip(grads.layers.iter_mut()).rev() {
            g_global = layer.global.backward(&lc.global, &g_global, &mut lg.global);
            if let (Some(inject), Some(local_out)) = (&layer.inject, &lc.local_out) {
                let grouped = local_out.regroup(subs)?;
                let g_grouped = inject.backward(&grouped, &g_global, lg.inject.as_mut().expect("same architecture"));
                g_local.data.iter_mut().zip(&g_grouped.data).for_each(|(a, b)| *a += b);
            }
            if let (Some(block), Some(c)) = (&layer.local, &lc.local) {
                g_local = block.backward(c, &g_local, lg.local.as_mut().expect("same architecture"));
            }
        }
        self.global_embed.backward(&cache.global_in, &g_global, &mut grads.global_embed);
        self.local_embed.backward(&cache.local_in, &g_local, &mut grads.local_embed);
        Ok(())
    }
}

impl Params for TransformerModule {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.local_embed.visit(&join(prefix, "local_embed"), f);
        self.global_embed.visit(&join(prefix, "global_embed"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layers.{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.local_embed.visit_mut(&join(prefix, "local_embed"), f);
        self.global_embed.visit_mut(&join(prefix, "global_embed"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
