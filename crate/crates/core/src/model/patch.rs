//! Image ↔ token conversions for the two patch granularities, and the fold
//! that turns per-patch token outputs back into a spatial feature map.

use alloc::format;
use alloc::vec::Vec;

use super::PatchConfig;
use crate::error::{Error, Result};
use crate::image::Plane;
use crate::tensor::{FeatureMap, TokenSequence};

fn check_plane(img: &Plane, cfg: &PatchConfig) -> Result<()> {
    cfg.validate()?;
    if img.dims() != (cfg.image_size, cfg.image_size) {
        return Err(Error::config(format!(
            "image {}x{} does not match patch config size {}",
            img.height(),
            img.width(),
            cfg.image_size
        )));
    }
    Ok(())
}

/// One token per `P_G × P_G` patch, patches in row-major order, each patch
/// flattened row-major.
pub fn patchify_global(img: &Plane, cfg: &PatchConfig) -> Result<TokenSequence> {
    check_plane(img, cfg)?;
    let p = cfg.global_patch;
    let per_side = cfg.image_size / p;
    let mut data = Vec::with_capacity(img.len());
    for py in 0..per_side {
        for px in 0..per_side {
            for y in 0..p {
                data.extend_from_slice(&img.row(py * p + y)[px * p..(px + 1) * p]);
            }
        }
    }
    TokenSequence::new(per_side * per_side, p * p, data)
}

pub fn unpatchify_global(seq: &TokenSequence, cfg: &PatchConfig) -> Result<Plane> {
    cfg.validate()?;
    let p = cfg.global_patch;
    if seq.count != cfg.global_tokens() || seq.dim != p * p {
        return Err(Error::shape(format!("sequence {}x{} is not a global patch sequence", seq.count, seq.dim)));
    }
    let per_side = cfg.image_size / p;
    let mut out = Plane::zeros(cfg.image_size, cfg.image_size);
    for (t, token) in seq.data.chunks_exact(p * p).enumerate() {
        let (py, px) = (t / per_side, t % per_side);
        for y in 0..p {
            for x in 0..p {
                out.set(py * p + y, px * p + x, token[y * p + x]);
            }
        }
    }
    Ok(out)
}

/// `P_L × P_L` sub-patch tokens grouped by parent patch: all sub-patches of
/// patch 0 (row-major inside it), then patch 1, and so on.
pub fn patchify_local(img: &Plane, cfg: &PatchConfig) -> Result<TokenSequence> {
    check_plane(img, cfg)?;
    let (pg, pl) = (cfg.global_patch, cfg.local_patch);
    let per_side = cfg.image_size / pg;
    let sub_side = pg / pl;
    let mut data = Vec::with_capacity(img.len());
    for py in 0..per_side {
        for px in 0..per_side {
            for sy in 0..sub_side {
                for sx in 0..sub_side {
                    for y in 0..pl {
                        let row = img.row(py * pg + sy * pl + y);
                        let x0 = px * pg + sx * pl;
                        data.extend_from_slice(&row[x0..x0 + pl]);
                    }
                }
            }
        }
    }
    TokenSequence::new(cfg.local_tokens(), pl * pl, data)
}

pub fn unpatchify_local(seq: &TokenSequence, cfg: &PatchConfig) -> Result<Plane> {
    cfg.validate()?;
    let (pg, pl) = (cfg.global_patch, cfg.local_patch);
    if seq.count != cfg.local_tokens() || seq.dim != pl * pl {
        return Err(Error::shape(format!("sequence {}x{} is not a local patch sequence", seq.count, seq.dim)));
    }
    let per_side = cfg.image_size / pg;
    let sub_side = pg / pl;
    let subs = sub_side * sub_side;
    let mut out = Plane::zeros(cfg.image_size, cfg.image_size);
    for (t, token) in seq.data.chunks_exact(pl * pl).enumerate() {
        let (patch, sub) = (t / subs, t % subs);
        let (py, px) = (patch / per_side, patch % per_side);
        let (sy, sx) = (sub / sub_side, sub % sub_side);
        for y in 0..pl {
            for x in 0..pl {
                out.set(py * pg + sy * pl + y, px * pg + sx * pl + x, token[y * pl + x]);
            }
        }
    }
    Ok(out)
}

/// Folds `[N_G, C·P_G²]` tokens into a `C × H × W` map. Token entry
/// `c·P_G² + y·P_G + x` lands at channel `c`, pixel `(y, x)` of its patch.
pub fn fold_tokens(seq: &TokenSequence, cfg: &PatchConfig, channels: usize) -> Result<FeatureMap> {
    let p = cfg.global_patch;
    if seq.count != cfg.global_tokens() || seq.dim != channels * p * p {
        return Err(Error::shape(format!(
            "cannot fold {}x{} tokens into {channels} channels",
            seq.count, seq.dim
        )));
    }
    let n = cfg.image_size;
    let per_side = n / p;
    let mut out = FeatureMap::zeros(channels, n, n);
    for (t, token) in seq.data.chunks_exact(seq.dim).enumerate() {
        let (py, px) = (t / per_side, t % per_side);
        for c in 0..channels {
            for y in 0..p {
                let dst = ((c * n) + py * p + y) * n + px * p;
                out.data[dst..dst + p].copy_from_slice(&token[(c * p + y) * p..(c * p + y + 1) * p]);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`fold_tokens`].
pub fn unfold_tokens(map: &FeatureMap, cfg: &PatchConfig) -> Result<TokenSequence> {
    let p = cfg.global_patch;
    let n = cfg.image_size;
    if (map.height, map.width) != (n, n) {
        return Err(Error::shape(format!("map {}x{} vs image size {n}", map.height, map.width)));
    }
    let per_side = n / p;
    let dim = map.channels * p * p;
    let mut seq = TokenSequence::zeros(per_side * per_side, dim);
    for t in 0..per_side * per_side {
        let (py, px) = (t / per_side, t % per_side);
        let token = seq.token_mut(t);
        for c in 0..map.channels {
            for y in 0..p {
                let src = ((c * n) + py * p + y) * n + px * p;
                token[(c * p + y) * p..(c * p + y + 1) * p].copy_from_slice(&map.data[src..src + p]);
            }
        }
    }
    Ok(seq)
}
