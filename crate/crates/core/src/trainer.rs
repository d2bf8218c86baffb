//! Self-supervised reconstruction training: destroy a batch, reconstruct it,
//! and step the optimizer on the loss against the original images.
//!
//! Every random draw is derived from the run seed, so a run is a pure
//! function of its configuration and training images.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::destruct::{destroy, TransformSpec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::loss::{self, LossBreakdown, LossConfig};
use crate::model::{ModelConfig, TransFuseNet};
use crate::nn::Params;
use crate::optim::{clip_grad_norm, lr_at, AdamW, AdamWConfig};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub image_size: usize,
    /// Global gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Write a checkpoint every this many epochs (0 = only the final one).
    pub checkpoint_every: usize,
    pub transform: TransformSpec,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 70,
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            seed: 0,
            image_size: 256,
            grad_clip: None,
            checkpoint_every: 10,
            transform: TransformSpec::default(),
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Overfit configuration for 8 images at 64×64: 100 full-batch steps.
    ///
    /// Subregions shrink with the image (4×4 on 64×64 keeps the destroyed
    /// area fraction of 16×16 on 256×256), and the TV term is normalized
    /// by pixel count so it does not swamp the other two terms at this size.
    pub fn desk_scale() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            learning_rate: 3e-3,
            weight_decay: 5e-4,
            seed: 0,
            image_size: 64,
            grad_clip: Some(1.0),
            checkpoint_every: 25,
            transform: TransformSpec { subregion_size: 4, ..TransformSpec::default() },
            loss: LossConfig { tv_normalize: true, ..LossConfig::default() },
            model: ModelConfig::desk_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight decay must be non-negative"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("gradient clip must be positive"));
            }
        }
        if self.model.transformer_branch && self.model.patch.image_size != self.image_size {
            return Err(Error::config(format!(
                "image size {} differs from the model's patch grid size {}",
                self.image_size, self.model.patch.image_size
            )));
        }
        if self.transform.subregion_size > self.image_size {
            return Err(Error::config("subregion larger than the training image"));
        }
        self.transform.validate()?;
        self.loss.validate()?;
        self.model.validate()
    }
}

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Shuffle,
    Destroy,
    Eval,
}

/// Generator for `(seed, stream, index)`; distinct triples never share output.
pub fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = stream as u8 + 1;
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Visiting order of the training set in `epoch`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, Stream::Shuffle, epoch as u64));
    order
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
}

/// Optimization state of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: TransFuseNet,
    optimizer: AdamW,
    step: usize,
    total_steps: usize,
    dataset_len: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset_len: usize) -> Result<Self> {
        config.validate()?;
        if dataset_len == 0 {
            return Err(Error::config("training set is empty"));
        }
        let model = TransFuseNet::new(&config.model, &mut rng_for(config.seed, Stream::Init, 0))?;
        let optimizer = AdamW::new(AdamWConfig { weight_decay: config.weight_decay, ..AdamWConfig::default() });
        let total_steps = config.epochs * Self::steps_per_epoch_for(dataset_len, config.batch_size);
        Ok(Trainer { config, model, optimizer, step: 0, total_steps, dataset_len })
    }

    fn steps_per_epoch_for(n: usize, batch: usize) -> usize {
        n.div_ceil(batch)
    }

    pub fn steps_per_epoch(&self) -> usize {
        Self::steps_per_epoch_for(self.dataset_len, self.config.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Index batches for `epoch`, in order.
    pub fn epoch_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        epoch_order(self.config.seed, epoch, self.dataset_len)
            .chunks(self.config.batch_size)
            .map(|c| c.to_vec())
            .collect()
    }

    /// One optimization step on `batch`. On a non-finite loss or gradient
    /// the model is left untouched and a numerical error is returned.
    pub fn step(&mut self, batch: &[&Image], epoch: usize) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        let n = self.config.image_size;
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.model.zeroed();
        let mut total = LossBreakdown::default();
        for (i, &img) in batch.iter().enumerate() {
            if img.dims() != (n, n) {
                return Err(Error::config(format!(
                    "training image is {}x{}, expected {n}x{n}",
                    img.height(),
                    img.width()
                )));
            }
            let index = (self.step * self.config.batch_size + i) as u64;
            let mut rng = rng_for(self.config.seed, Stream::Destroy, index);
            let (destroyed, _) = destroy(img, &self.config.transform, &mut rng)?;
            let (out, cache) = self.model.forward_train(&destroyed)?;
            let (parts, mut g) = loss::loss_total_with_grad(&out, img, &self.config.loss)?;
            if !parts.total.is_finite() {
                return Err(Error::Numerical(format!("loss became {} at step {}", parts.total, self.step)));
            }
            g.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
            self.model.backward(&cache, &g, &mut grads)?;
            total.mse += parts.mse * scale;
            total.ssim += parts.ssim * scale;
            total.tv += parts.tv * scale;
            total.total += parts.total * scale;
        }
        let grad_norm = match self.config.grad_clip {
            Some(c) => clip_grad_norm(&mut grads, c),
            None => {
                let mut sq = 0.0;
                grads.visit("", &mut |_, t| sq += t.sum_sq());
                libm::sqrt(sq)
            }
        };
        if !grad_norm.is_finite() {
            return Err(Error::Numerical(format!("gradient became {grad_norm} at step {}", self.step)));
        }
        let lr = lr_at(self.step, self.total_steps, self.config.learning_rate);
        self.optimizer.step(&mut self.model, &grads, lr);
        let record = StepRecord { step: self.step, epoch, lr, loss: total, grad_norm };
        self.step += 1;
        Ok(record)
    }

    /// Runs every batch of `epoch`, calling `on_step` after each one.
    pub fn run_epoch(
        &mut self,
        images: &[Image],
        epoch: usize,
        on_step: &mut dyn FnMut(&StepRecord),
    ) -> Result<()> {
        if images.len() != self.dataset_len {
            return Err(Error::config(format!(
                "trainer built for {} images, got {}",
                self.dataset_len,
                images.len()
            )));
        }
        for idx in self.epoch_batches(epoch) {
            let batch: Vec<&Image> = idx.iter().map(|&i| &images[i]).collect();
            let rec = self.step(&batch, epoch)?;
            on_step(&rec);
        }
        Ok(())
    }
}

/// Trains on in-memory images for the configured number of epochs.
pub fn train_in_memory(
    images: &[Image],
    config: TrainConfig,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TransFuseNet> {
    let mut trainer = Trainer::new(config, images.len())?;
    for epoch in 0..trainer.config.epochs {
        trainer.run_epoch(images, epoch, on_step)?;
    }
    Ok(trainer.model)
}

/// Mean SSIM between each image and the model's reconstruction of a
/// destroyed copy of it.
pub fn reconstruction_ssim(
    model: &TransFuseNet,
    images: &[Image],
    spec: &TransformSpec,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::config("no images to evaluate"));
    }
    let mut sum = 0.0;
    for (i, img) in images.iter().enumerate() {
        let (destroyed, _) = destroy(img, spec, &mut rng_for(seed, Stream::Eval, i as u64))?;
        let out = model.reconstruct(&destroyed)?;
        sum += loss::ssim(&out, img, loss_cfg)?;
    }
    Ok(sum / images.len() as f64)
}

/// Trailing moving averages of `values` over `window` entries.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() + 1 - window);
    let mut sum: f64 = values[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..values.len() {
        sum += values[i] - values[i - window];
        out.push(sum / window as f64);
    }
    out
}
