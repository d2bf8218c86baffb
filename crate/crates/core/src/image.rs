//! Grayscale rasters.
//!
//! [`Plane`] is an unconstrained real-valued grid (network outputs, residuals,
//! filter responses). [`Image`] is a plane whose values are known to lie in
//! `[0, 1]`; it derefs to [`Plane`] so every plane operation accepts it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};

/// Smallest side length accepted by [`preprocess`].
pub const MIN_TARGET_SIZE: usize = 8;

/// Row-major `height × width` grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape(format!("empty plane {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "plane {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Plane { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "empty plane");
        Plane { height, width, data: vec![value; height * width] }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "empty plane");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Plane { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims(&self, other: &Plane) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Copy of the `height × width` block whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Plane> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::shape(format!(
                "block {height}x{width} at ({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            data.extend_from_slice(&self.row(y)[left..left + width]);
        }
        Ok(Plane { height, width, data })
    }

    /// Writes `block` into `self` with its top-left corner at `(top, left)`.
    pub fn paste(&mut self, block: &Plane, top: usize, left: usize) -> Result<()> {
        if top + block.height > self.height || left + block.width > self.width {
            return Err(Error::shape(format!(
                "block {}x{} at ({top},{left}) outside {}x{}",
                block.height, block.width, self.height, self.width
            )));
        }
        for y in 0..block.height {
            let dst = (top + y) * self.width + left;
            self.data[dst..dst + block.width].copy_from_slice(block.row(y));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Clamps every value into `[0, 1]`; NaN becomes 0.
    pub fn clamp_to_image(&self) -> Image {
        Image(self.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }
}

/// Grayscale image with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(Plane);

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::from_plane(Plane::new(height, width, pixels)?)
    }

    pub fn from_plane(plane: Plane) -> Result<Self> {
        if let Some((i, v)) = plane
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidImage(format!("pixel {i} = {v} outside [0,1]")));
        }
        Ok(Image(plane))
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Image(Plane::filled(height, width, value))
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_plane(Plane::from_fn(height, width, &mut f))
    }

    pub fn as_plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }

    /// 8-bit quantization used by the file writers.
    pub fn to_u8(&self) -> Vec<u8> {
        self.0
            .as_slice()
            .iter()
            .map(|&v| libm::round(v * 255.0) as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }
}

impl Deref for Image {
    type Target = Plane;

    fn deref(&self) -> &Plane {
        &self.0
    }
}

/// ITU-R BT.601 luma of an 8-bit RGB triple, in `[0, 1]`.
pub fn luma_601(r: u8, g: u8, b: u8) -> f64 {
    let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    f64::from(weighted) / 255_000.0
}

/// Bilinear resize with corner-aligned sampling: output corners land exactly
/// on input corners.
pub fn resize_bilinear(src: &Plane, height: usize, width: usize) -> Plane {
    if src.dims() == (height, width) {
        return src.clone();
    }
    let scale = |dst_n: usize, src_n: usize| {
        if dst_n > 1 {
            (src_n - 1) as f64 / (dst_n - 1) as f64
        } else {
            0.0
        }
    };
    let sy = scale(height, src.height());
    let sx = scale(width, src.width());
    let xs: Vec<(usize, usize, f64)> = (0..width)
        .map(|x| {
            let fx = x as f64 * sx;
            let x0 = (libm::floor(fx) as usize).min(src.width() - 1);
            let x1 = (x0 + 1).min(src.width() - 1);
            (x0, x1, fx - x0 as f64)
        })
        .collect();
    Plane::from_fn(height, width, |y, x| {
        let fy = y as f64 * sy;
        let y0 = (libm::floor(fy) as usize).min(src.height() - 1);
        let y1 = (y0 + 1).min(src.height() - 1);
        let wy = fy - y0 as f64;
        let (x0, x1, wx) = xs[x];
        let top = src.get(y0, x0) * (1.0 - wx) + src.get(y0, x1) * wx;
        let bottom = src.get(y1, x0) * (1.0 - wx) + src.get(y1, x1) * wx;
        top * (1.0 - wy) + bottom * wy
    })
}

/// Resizes to `target × target` (anisotropically, no cropping).
pub fn preprocess(img: &Image, target: usize) -> Result<Image> {
    if target < MIN_TARGET_SIZE {
        return Err(Error::config(format!(
            "target size {target} below minimum {MIN_TARGET_SIZE}"
        )));
    }
    // Convex combinations of values in [0,1] can drift by an ulp; clamp to keep the invariant.
    Ok(resize_bilinear(img, target, target).clamp_to_image())
}
