//! Dense containers: learned parameter tensors, spatial feature maps, and
//! token sequences, plus the small matrix kernels the layers are built on.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::Plane;

/// Learned parameter: a shaped, row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zero_(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `channels × height × width` activation grid, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(FeatureMap { channels, height, width, data })
    }

    pub fn from_plane(p: &Plane) -> Self {
        FeatureMap { channels: 1, height: p.height(), width: p.width(), data: p.as_slice().to_vec() }
    }

    /// First channel as a plane.
    pub fn to_plane(&self) -> Plane {
        Plane::new(self.height, self.width, self.channel(0).to_vec()).expect("non-empty map")
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> Result<()> {
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width) {
            return Err(Error::shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks `a` on top of `b` along the channel axis.
    pub fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
        if (a.height, a.width) != (b.height, b.width) {
            return Err(Error::shape(format!(
                "cannot concatenate {}x{} with {}x{}",
                a.height, a.width, b.height, b.width
            )));
        }
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(FeatureMap { channels: a.channels + b.channels, height: a.height, width: a.width, data })
    }

    /// Inverse of [`FeatureMap::concat_channels`].
    pub fn split_channels(&self, first: usize) -> (FeatureMap, FeatureMap) {
        let n = first * self.plane_len();
        (
            FeatureMap { channels: first, height: self.height, width: self.width, data: self.data[..n].to_vec() },
            FeatureMap {
                channels: self.channels - first,
                height: self.height,
                width: self.width,
                data: self.data[n..].to_vec(),
            },
        )
    }
}

/// `count × dim` matrix of token embeddings, one token per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub count: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl TokenSequence {
    pub fn zeros(count: usize, dim: usize) -> Self {
        TokenSequence { count, dim, data: vec![0.0; count * dim] }
    }

    pub fn new(count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != count * dim {
            return Err(Error::shape(format!(
                "sequence {count}x{dim} needs {} values, got {}",
                count * dim,
                data.len()
            )));
        }
        Ok(TokenSequence { count, dim, data })
    }

    #[inline]
    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn token_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets groups of `group` consecutive tokens as single tokens of
    /// width `group · dim`. Free in row-major storage.
    pub fn regroup(&self, group: usize) -> Result<TokenSequence> {
        if group == 0 || self.count % group != 0 {
            return Err(Error::shape(format!("{} tokens do not split into groups of {group}", self.count)));
        }
        Ok(TokenSequence { count: self.count / group, dim: self.dim * group, data: self.data.clone() })
    }
}

/// Column tile width: one tile of a tall right-hand side stays cache-resident
/// while every left-hand row passes over it.
const TILE: usize = 64;

/// `out[n×m] = a[n×k] · b[k×m]`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![0.0; n * m];
    for j0 in (0..m).step_by(TILE) {
        let j1 = (j0 + TILE).min(m);
        for i in 0..n {
            let row = &mut out[i * m + j0..i * m + j1];
            for p in 0..k {
                let s = a[i * k + p];
                if s == 0.0 {
                    continue;
                }
                for (o, &bv) in row.iter_mut().zip(&b[p * m + j0..p * m + j1]) {
                    *o += s * bv;
                }
            }
        }
    }
    out
}

/// `out[k×m] += aᵀ · b` for `a[n×k]`, `b[n×m]`.
pub fn matmul_at_b_acc(out: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(out.len(), k * m);
    for j0 in (0..m).step_by(TILE) {
        let j1 = (j0 + TILE).min(m);
        for p in 0..k {
            let orow = &mut out[p * m + j0..p * m + j1];
            for i in 0..n {
                let s = a[i * k + p];
                if s == 0.0 {
                    continue;
                }
                for (o, &bv) in orow.iter_mut().zip(&b[i * m + j0..i * m + j1]) {
                    *o += s * bv;
                }
            }
        }
    }
}

/// `out[n×m] = a[n×k] · bᵀ` for `b[m×k]`.
pub fn matmul_a_bt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            out[i * m + j] = dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// `out[n×m] += a[n×k] · bᵀ` for `b[m×k]`, tiled along `k` so long rows
/// are read once from memory.
pub fn matmul_a_bt_acc(out: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(out.len(), n * m);
    for p0 in (0..k).step_by(TILE) {
        let p1 = (p0 + TILE).min(k);
        for j in 0..m {
            let brow = &b[j * k + p0..j * k + p1];
            for i in 0..n {
                out[i * m + j] += dot(&a[i * k + p0..i * k + p1], brow);
            }
        }
    }
}

/// Inner product with four interleaved partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
