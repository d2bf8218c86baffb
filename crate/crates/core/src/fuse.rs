//! Feature-map fusion rules and the encode → merge → decode fusion path.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter::reflect_index;
use crate::image::Image;
use crate::model::TransFuseNet;
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FusionKind {
    #[default]
    Average,
    L1Norm,
}

impl FusionKind {
    pub fn name(self) -> &'static str {
        match self {
            FusionKind::Average => "average",
            FusionKind::L1Norm => "l1norm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "average" => Some(FusionKind::Average),
            "l1norm" => Some(FusionKind::L1Norm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FusionRule {
    pub kind: FusionKind,
    /// Half-width of the activity averaging window of the l1-norm rule.
    pub l1_block_radius: usize,
}

impl Default for FusionRule {
    fn default() -> Self {
        FusionRule { kind: FusionKind::Average, l1_block_radius: 1 }
    }
}

impl FusionRule {
    pub fn average() -> Self {
        FusionRule::default()
    }

    pub fn l1norm(radius: usize) -> Self {
        FusionRule { kind: FusionKind::L1Norm, l1_block_radius: radius }
    }

    pub fn apply(&self, f1: &FeatureMap, f2: &FeatureMap) -> Result<FeatureMap> {
        match self.kind {
            FusionKind::Average => fuse_average(f1, f2),
            FusionKind::L1Norm => fuse_l1norm(f1, f2, self.l1_block_radius),
        }
    }
}

fn check_shapes(f1: &FeatureMap, f2: &FeatureMap) -> Result<()> {
    f1.same_shape(f2)
}

pub fn fuse_average(f1: &FeatureMap, f2: &FeatureMap) -> Result<FeatureMap> {
    check_shapes(f1, f2)?;
    let data = f1.data.iter().zip(&f2.data).map(|(a, b)| 0.5 * (a + b)).collect();
    FeatureMap::new(f1.channels, f1.height, f1.width, data)
}

/// Channelwise l1 norm at each location, averaged over a `(2r+1)²` window
/// with reflected borders.
pub fn l1_activity(f: &FeatureMap, radius: usize) -> Vec<f64> {
    let (h, w, n) = (f.height, f.width, f.plane_len());
    let mut raw = vec![0.0; n];
    for c in 0..f.channels {
        for (a, v) in raw.iter_mut().zip(f.channel(c)) {
            *a += v.abs();
        }
    }
    if radius == 0 {
        return raw;
    }
    let r = radius as isize;
    let area = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut out = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -r..=r {
                let yy = reflect_index(y as isize + dy, h);
                for dx in -r..=r {
                    s += raw[yy * w + reflect_index(x as isize + dx, w)];
                }
            }
            out[y * w + x] = s / area;
        }
    }
    out
}

/// Per-location blend weights `(w1, w2)` of the l1-norm rule.
pub fn l1norm_weights(f1: &FeatureMap, f2: &FeatureMap, radius: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(f1, f2)?;
    let a1 = l1_activity(f1, radius);
    let a2 = l1_activity(f2, radius);
    let mut w1 = Vec::with_capacity(a1.len());
    let mut w2 = Vec::with_capacity(a1.len());
    for (&c1, &c2) in a1.iter().zip(&a2) {
        let s = c1 + c2;
        if s > 0.0 {
            w1.push(c1 / s);
            w2.push(c2 / s);
        } else {
            w1.push(0.5);
            w2.push(0.5);
        }
    }
    Ok((w1, w2))
}

pub fn fuse_l1norm(f1: &FeatureMap, f2: &FeatureMap, radius: usize) -> Result<FeatureMap> {
    let (w1, w2) = l1norm_weights(f1, f2, radius)?;
    let n = f1.plane_len();
    let mut data = Vec::with_capacity(f1.data.len());
    for c in 0..f1.channels {
        let (a, b) = (f1.channel(c), f2.channel(c));
        for i in 0..n {
            // identical inputs must come back unchanged, whatever the weights
            data.push(if a[i] == b[i] { a[i] } else { w1[i] * a[i] + w2[i] * b[i] });
        }
    }
    FeatureMap::new(f1.channels, f1.height, f1.width, data)
}

/// Encodes both sources, merges their features by `rule`, and decodes.
pub fn fuse_images(model: &TransFuseNet, a: &Image, b: &Image, rule: &FusionRule) -> Result<Image> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "source sizes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let f1 = model.encode(a)?;
    let f2 = model.encode(b)?;
    let fused = rule.apply(&f1, &f2)?;
    Ok(model.decode(&fused))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(c: usize, n: usize, f: impl Fn(usize) -> f64) -> FeatureMap {
        FeatureMap::new(c, n, n, (0..c * n * n).map(f).collect()).unwrap()
    }

    #[test]
    fn average_examples() {
        let z = map(2, 3, |_| 0.0);
        let o = map(2, 3, |_| 1.0);
        assert!(fuse_average(&z, &o).unwrap().data.iter().all(|&v| v == 0.5));
        let f = map(2, 3, |i| (i as f64 * 0.37).sin());
        assert_eq!(fuse_average(&f, &f).unwrap(), f);
        assert!(matches!(fuse_average(&f, &map(1, 3, |_| 0.0)), Err(Error::Shape(_))));
    }

    #[test]
    fn l1norm_examples() {
        let f = map(3, 5, |i| 0.1 + (i as f64 * 0.61).cos().abs());
        let z = map(3, 5, |_| 0.0);
        assert_eq!(fuse_l1norm(&f, &f, 1).unwrap(), f);
        let (w1, w2) = l1norm_weights(&f, &f, 1).unwrap();
        assert!(w1.iter().chain(&w2).all(|&w| w == 0.5));
        let out = fuse_l1norm(&f, &z, 1).unwrap();
        for (a, b) in out.data.iter().zip(&f.data) {
            assert!((a - b).abs() < 1e-15);
        }
        let (w1, w2) = l1norm_weights(&z, &z, 2).unwrap();
        assert!(w1.iter().zip(&w2).all(|(&a, &b)| a == 0.5 && b == 0.5));
    }

    #[test]
    fn activity_window_oracle() {
        // single channel 3x3, radius 1: the centre is the plain 3x3 mean
        let f = map(1, 3, |i| i as f64 - 4.0);
        let a = l1_activity(&f, 1);
        let want = f.data.iter().map(|v| v.abs()).sum::<f64>() / 9.0;
        assert!((a[4] - want).abs() < 1e-15);
        assert_eq!(l1_activity(&f, 0), f.data.iter().map(|v| v.abs()).collect::<Vec<_>>());
    }

    #[test]
    fn rule_names_round_trip() {
        for k in [FusionKind::Average, FusionKind::L1Norm] {
            assert_eq!(FusionKind::from_name(k.name()), Some(k));
        }
        assert_eq!(FusionKind::from_name("max"), None);
    }
}
