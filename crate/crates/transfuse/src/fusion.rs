use std::path::Path;

use transfuse_core::fuse::{fuse_images, FusionRule};
use transfuse_core::Image;

use crate::checkpoint::load_checkpoint;
use crate::error::Result;
use crate::io::{load_image, save_image};

/// Loads a checkpoint and both sources, fuses them, and writes the result.
pub fn fuse_files(checkpoint: &Path, a: &Path, b: &Path, rule: &FusionRule, out: &Path) -> Result<Image> {
    let model = load_checkpoint(checkpoint)?;
    let (a, b) = (load_image(a)?, load_image(b)?);
    let fused = fuse_images(&model, &a, &b, rule)?;
    save_image(out, &fused)?;
    Ok(fused)
}
