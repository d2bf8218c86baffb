//! Encoder-decoder network.
//!
//! The encoder runs a CNN branch (three conv blocks) and a transformer branch
//! side by side, concatenates their feature maps along channels and refines
//! them with two more conv blocks (the enhance stage). The decoder is two conv
//! blocks and a 1×1 convolution down to one channel.

mod patch;
mod transformer;

pub use patch::{fold_tokens, patchify_global, patchify_local, unfold_tokens, unpatchify_global, unpatchify_local};
pub use transformer::{inject_local, PatchEmbedding, TransformerCache, TransformerLayer, TransformerModule};

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::nn::{join, Conv2d, ConvBlock, ConvBlockCache, Params};
use crate::tensor::{FeatureMap, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PatchConfig {
    pub image_size: usize,
    pub global_patch: usize,
    pub local_patch: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig { image_size: 256, global_patch: 16, local_patch: 4 }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        let PatchConfig { image_size, global_patch, local_patch } = *self;
        if global_patch == 0 || local_patch == 0 || image_size == 0 {
            return Err(Error::config("patch sizes must be positive"));
        }
        if image_size % global_patch != 0 {
            return Err(Error::config(format!("image size {image_size} not divisible by patch {global_patch}")));
        }
        if global_patch % local_patch != 0 {
            return Err(Error::config(format!("patch {global_patch} not divisible by sub-patch {local_patch}")));
        }
        Ok(())
    }

    /// `N_G = (H / P_G)²`.
    pub fn global_tokens(&self) -> usize {
        let s = self.image_size / self.global_patch;
        s * s
    }

    pub fn sub_patches_per_patch(&self) -> usize {
        let s = self.global_patch / self.local_patch;
        s * s
    }

    pub fn local_tokens(&self) -> usize {
        self.global_tokens() * self.sub_patches_per_patch()
    }
}

/// Where local tokens feed the global sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InjectionMode {
    /// A fine-grained block and an injection before every global block.
    #[default]
    EveryLayer,
    /// One fine-grained block and one injection, before the first global block.
    FirstLayer,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub cnn_channels: usize,
    pub token_dim_global: usize,
    pub token_dim_local: usize,
    /// Channels of the folded transformer feature map.
    pub trans_channels: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub patch: PatchConfig,
    pub transformer_branch: bool,
    pub injection: InjectionMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cnn_channels: 16,
            token_dim_global: 64,
            token_dim_local: 16,
            trans_channels: 8,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
            patch: PatchConfig::default(),
            transformer_branch: true,
            injection: InjectionMode::EveryLayer,
        }
    }
}

impl ModelConfig {
    /// 64×64 inputs, 8/4 patches, two layers, every width halved.
    pub fn desk_scale() -> Self {
        ModelConfig {
            cnn_channels: 8,
            token_dim_global: 32,
            token_dim_local: 8,
            trans_channels: 4,
            depth: 2,
            heads: 2,
            mlp_ratio: 4,
            patch: PatchConfig { image_size: 64, global_patch: 8, local_patch: 4 },
            transformer_branch: true,
            injection: InjectionMode::EveryLayer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cnn_channels == 0 || self.mlp_ratio == 0 {
            return Err(Error::config("channel counts and mlp ratio must be positive"));
        }
        if !self.transformer_branch {
            return Ok(());
        }
        self.patch.validate()?;
        if self.depth == 0 {
            return Err(Error::config("transformer depth must be at least 1"));
        }
        if self.trans_channels == 0 {
            return Err(Error::config("transformer channels must be positive"));
        }
        if self.heads == 0 || self.token_dim_global % self.heads != 0 || self.token_dim_local % self.heads != 0 {
            return Err(Error::config(format!(
                "token dims {}/{} not divisible by {} heads",
                self.token_dim_global, self.token_dim_local, self.heads
            )));
        }
        Ok(())
    }
}

/// Three conv blocks, single channel in, `cnn_channels` out.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModule {
    pub blocks: Vec<ConvBlock>,
}

impl CnnModule {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        CnnModule {
            blocks: alloc::vec![
                ConvBlock::new(1, channels, rng),
                ConvBlock::new(channels, channels, rng),
                ConvBlock::new(channels, channels, rng),
            ],
        }
    }

    pub fn forward(&self, img: &Plane) -> FeatureMap {
        let mut x = FeatureMap::from_plane(img);
        for b in &self.blocks {
            x = b.forward(&x);
        }
        x
    }
}

/// Concatenation of CNN and transformer features refined by two conv blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceBlock {
    pub blocks: Vec<ConvBlock>,
}

impl EnhanceBlock {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, channels: usize, rng: &mut R) -> Self {
        EnhanceBlock { blocks: alloc::vec![ConvBlock::new(in_channels, channels, rng), ConvBlock::new(channels, channels, rng)] }
    }

    pub fn in_channels(&self) -> usize {
        self.blocks[0].conv1.in_channels
    }

    /// With `trans_feat` absent only the CNN features enter the block.
    pub fn forward(&self, cnn_feat: &FeatureMap, trans_feat: Option<&FeatureMap>) -> Result<FeatureMap> {
        let x = match trans_feat {
            Some(t) => FeatureMap::concat_channels(cnn_feat, t)?,
            None => cnn_feat.clone(),
        };
        if x.channels != self.in_channels() {
            return Err(Error::shape(format!("enhance block expects {} channels, got {}", self.in_channels(), x.channels)));
        }
        Ok(self.blocks[1].forward(&self.blocks[0].forward(&x)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub blocks: Vec<ConvBlock>,
    pub out: Conv2d,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Decoder {
            blocks: alloc::vec![ConvBlock::new(channels, channels, rng), ConvBlock::new(channels, channels, rng)],
            out: Conv2d::new(channels, 1, 1, rng),
        }
    }

    /// Unclamped single-channel output.
    pub fn forward_raw(&self, feat: &FeatureMap) -> Plane {
        let mut x = feat.clone();
        for b in &self.blocks {
            x = b.forward(&x);
        }
        self.out.forward(&x).to_plane()
    }

    /// Inference output, clamped to `[0, 1]`.
    pub fn forward(&self, feat: &FeatureMap) -> Image {
        self.forward_raw(feat).clamp_to_image()
    }
}

/// The complete encoder-decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TransFuseNet {
    pub config: ModelConfig,
    pub cnn: CnnModule,
    pub transformer: Option<TransformerModule>,
    pub enhance: EnhanceBlock,
    pub decoder: Decoder,
}

/// Activations kept from a training forward pass.
pub struct ForwardCache {
    cnn: Vec<ConvBlockCache>,
    transformer: Option<TransformerCache>,
    enhance: Vec<ConvBlockCache>,
    decoder: Vec<ConvBlockCache>,
    decoder_out_in: FeatureMap,
}

impl TransFuseNet {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.cnn_channels;
        let cnn = CnnModule::new(c, rng);
        let transformer = config.transformer_branch.then(|| TransformerModule::new(config, rng));
        let enhance_in = if config.transformer_branch { c + config.trans_channels } else { c };
        let enhance = EnhanceBlock::new(enhance_in, c, rng);
        let decoder = Decoder::new(c, rng);
        Ok(TransFuseNet { config: config.clone(), cnn, transformer, enhance, decoder })
    }

    /// Architecture for `config` with every parameter zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        Ok(Self::new(config, &mut ChaCha8Rng::seed_from_u64(0))?.zeroed())
    }

    fn check_input(&self, img: &Plane) -> Result<()> {
        if self.transformer.is_some() {
            let n = self.config.patch.image_size;
            if img.dims() != (n, n) {
                return Err(Error::config(format!(
                    "model expects {n}x{n} input, got {}x{}",
                    img.height(),
                    img.width()
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self, img: &Plane) -> Result<FeatureMap> {
        self.check_input(img)?;
        let cnn = self.cnn.forward(img);
        let trans = self.transformer.as_ref().map(|t| t.forward(img)).transpose()?;
        let out = self.enhance.forward(&cnn, trans.as_ref())?;
        if !out.is_finite() {
            return Err(Error::Numerical("non-finite encoder output".into()));
        }
        Ok(out)
    }

    pub fn decode(&self, feat: &FeatureMap) -> Image {
        self.decoder.forward(feat)
    }

    pub fn decode_raw(&self, feat: &FeatureMap) -> Plane {
        self.decoder.forward_raw(feat)
    }

    /// `decode(encode(img))`, clamped.
    pub fn reconstruct(&self, img: &Plane) -> Result<Image> {
        Ok(self.decode(&self.encode(img)?))
    }

    /// Raw (unclamped) reconstruction plus the activations needed by
    /// [`TransFuseNet::backward`].
    pub fn forward_train(&self, img: &Plane) -> Result<(Plane, ForwardCache)> {
        self.check_input(img)?;
        let mut x = FeatureMap::from_plane(img);
        let mut cnn = Vec::with_capacity(3);
        for b in &self.cnn.blocks {
            let (y, c) = b.forward_cached(&x);
            cnn.push(c);
            x = y;
        }
        let (trans_feat, transformer) = match &self.transformer {
            Some(t) => {
                let (f, c) = t.forward_cached(img)?;
                (Some(f), Some(c))
            }
            None => (None, None),
        };
        let mut x = match &trans_feat {
            Some(t) => FeatureMap::concat_channels(&x, t)?,
            None => x,
        };
        let mut enhance = Vec::with_capacity(2);
        for b in &self.enhance.blocks {
            let (y, c) = b.forward_cached(&x);
            enhance.push(c);
            x = y;
        }
        let mut decoder = Vec::with_capacity(2);
        for b in &self.decoder.blocks {
            let (y, c) = b.forward_cached(&x);
            decoder.push(c);
            x = y;
        }
        let out = self.decoder.out.forward(&x).to_plane();
        if out.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite reconstruction".into()));
        }
        Ok((out, ForwardCache { cnn, transformer, enhance, decoder, decoder_out_in: x }))
    }

    /// Accumulates `∂loss/∂θ` into `grads` given `∂loss/∂output`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Plane, grads: &mut TransFuseNet) -> Result<()> {
        let g = FeatureMap::from_plane(grad_output);
        let mut g = self
            .decoder
            .out
            .backward(&cache.decoder_out_in, &g, &mut grads.decoder.out, true)
            .expect("requested");
        for ((b, c), gb) in self.decoder.blocks.iter().zip(&cache.decoder).zip(grads.decoder.blocks.iter_mut()).rev() {
            g = b.backward(c, &g, gb, true).expect("requested");
        }
        for ((b, c), gb) in self.enhance.blocks.iter().zip(&cache.enhance).zip(grads.enhance.blocks.iter_mut()).rev() {
            g = b.backward(c, &g, gb, true).expect("requested");
        }
        let mut g = match (&self.transformer, &cache.transformer) {
            (Some(t), Some(tc)) => {
                let (g_cnn, g_trans) = g.split_channels(self.config.cnn_channels);
                t.backward(tc, &g_trans, grads.transformer.as_mut().expect("same architecture"))?;
                g_cnn
            }
            _ => g,
        };
        for (i, ((b, c), gb)) in self.cnn.blocks.iter().zip(&cache.cnn).zip(grads.cnn.blocks.iter_mut()).enumerate().rev() {
            if let Some(next) = b.backward(c, &g, gb, i > 0) {
                g = next;
            }
        }
        Ok(())
    }

    pub fn named_parameters(&self) -> Vec<(alloc::string::String, Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name.into(), t.clone())));
        out
    }
}

impl Params for TransFuseNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, b) in self.cnn.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("cnn.{i}")), f);
        }
        if let Some(t) = &self.transformer {
            t.visit(&join(prefix, "transformer"), f);
        }
        for (i, b) in self.enhance.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("enhance.{i}")), f);
        }
        for (i, b) in self.decoder.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("decoder.{i}")), f);
        }
        self.decoder.out.visit(&join(prefix, "decoder.out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, b) in self.cnn.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("cnn.{i}")), f);
        }
        if let Some(t) = &mut self.transformer {
            t.visit_mut(&join(prefix, "transformer"), f);
        }
        for (i, b) in self.enhance.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("enhance.{i}")), f);
        }
        for (i, b) in self.decoder.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("decoder.{i}")), f);
        }
        self.decoder.out.visit_mut(&join(prefix, "decoder.out"), f);
    }
}
