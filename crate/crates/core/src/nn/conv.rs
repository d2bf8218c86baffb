use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{init, join, Params};
use crate::tensor::{self, FeatureMap, Tensor};

/// Square convolution, stride 1, zero padding `kernel / 2` (size preserving
/// for odd kernels). Weight layout `[out, in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        let mut c = Self::zeros(in_channels, out_channels, kernel);
        init::he_normal(&mut c.weight, in_channels * kernel * kernel, rng);
        c
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Unfolds `x` into `[in·k·k, h·w]`; row `(c, ky, kx)` is channel `c`
    /// shifted by `(ky - pad, kx - pad)` with zeros outside.
    fn im2col(&self, x: &FeatureMap) -> Vec<f64> {
        let (h, w) = (x.height, x.width);
        let hw = h * w;
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let mut col = vec![0.0; self.patch_rows() * hw];
        for c in 0..self.in_channels {
            let src = x.channel(c);
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let r = (c * k + ky) * k + kx;
                    let dst = &mut col[r * hw..(r + 1) * hw];
                    let (x_lo, x_hi) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize) as usize);
                    let (y_lo, y_hi) = ((-dy).max(0) as usize, (h as isize - dy).min(h as isize) as usize);
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let sx = (x_lo as isize + dx) as usize;
                        dst[y * w + x_lo..y * w + x_hi].copy_from_slice(&src[sy * w + sx..sy * w + sx + (x_hi - x_lo)]);
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[f64], h: usize, w: usize) -> FeatureMap {
        let hw = h * w;
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let mut out = FeatureMap::zeros(self.in_channels, h, w);
        for c in 0..self.in_channels {
            let dst = out.channel_mut(c);
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let r = (c * k + ky) * k + kx;
                    let src = &col[r * hw..(r + 1) * hw];
                    let (x_lo, x_hi) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize) as usize);
                    let (y_lo, y_hi) = ((-dy).max(0) as usize, (h as isize - dy).min(h as isize) as usize);
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let sx = (x_lo as isize + dx) as usize;
                        let d = &mut dst[sy * w + sx..sy * w + sx + (x_hi - x_lo)];
                        for (o, &g) in d.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                            *o += g;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(x.channels, self.in_channels);
        let hw = x.plane_len();
        let mut data = if self.kernel == 1 {
            tensor::matmul(&self.weight.data, &x.data, self.out_channels, self.in_channels, hw)
        } else {
            let col = self.im2col(x);
            tensor::matmul(&self.weight.data, &col, self.out_channels, self.patch_rows(), hw)
        };
        for (plane, b) in data.chunks_exact_mut(hw).zip(&self.bias.data) {
            plane.iter_mut().for_each(|v| *v += b);
        }
        FeatureMap { channels: self.out_channels, height: x.height, width: x.width, data }
    }

    /// Accumulates parameter gradients into `grads`; returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        x: &FeatureMap,
        grad_out: &FeatureMap,
        grads: &mut Conv2d,
        need_input_grad: bool,
    ) -> Option<FeatureMap> {
        let hw = x.plane_len();
        let rows = self.patch_rows();
        let col_owned;
        let col: &[f64] = if self.kernel == 1 {
            &x.data
        } else {
            col_owned = self.im2col(x);
            &col_owned
        };
        for o in 0..self.out_channels {
            grads.bias.data[o] += grad_out.channel(o).iter().sum::<f64>();
        }
        tensor::matmul_a_bt_acc(&mut grads.weight.data, &grad_out.data, col, self.out_channels, hw, rows);
        if !need_input_grad {
            return None;
        }
        let mut gcol = vec![0.0; rows * hw];
        tensor::matmul_at_b_acc(&mut gcol, &self.weight.data, &grad_out.data, self.out_channels, rows, hw);
        if self.kernel == 1 {
            Some(FeatureMap { channels: self.in_channels, height: x.height, width: x.width, data: gcol })
        } else {
            Some(self.col2im(&gcol, x.height, x.width))
        }
    }
}

impl Params for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &crate::tensor::Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut crate::tensor::Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Two 3×3 convolutions followed by a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

#[derive(Debug, Clone)]
pub struct ConvBlockCache {
    input: FeatureMap,
    mid: FeatureMap,
    pre_relu: FeatureMap,
}

impl ConvBlock {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        ConvBlock { conv1: Conv2d::new(in_channels, out_channels, 3, rng), conv2: Conv2d::new(out_channels, out_channels, 3, rng) }
    }

    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvBlock { conv1: Conv2d::zeros(in_channels, out_channels, 3), conv2: Conv2d::zeros(out_channels, out_channels, 3) }
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &FeatureMap) -> (FeatureMap, ConvBlockCache) {
        let mid = self.conv1.forward(x);
        let pre_relu = self.conv2.forward(&mid);
        let mut out = pre_relu.clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        (out, ConvBlockCache { input: x.clone(), mid, pre_relu })
    }

    pub fn backward(
        &self,
        cache: &ConvBlockCache,
        grad_out: &FeatureMap,
        grads: &mut ConvBlock,
        need_input_grad: bool,
    ) -> Option<FeatureMap> {
        let mut g = grad_out.clone();
        for (gv, &p) in g.data.iter_mut().zip(&cache.pre_relu.data) {
            if p <= 0.0 {
                *gv = 0.0;
            }
        }
        let g_mid = self.conv2.backward(&cache.mid, &g, &mut grads.conv2, true).expect("requested");
        self.conv1.backward(&cache.input, &g_mid, &mut grads.conv1, need_input_grad)
    }
}

impl Params for ConvBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &crate::tensor::Tensor)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut crate::tensor::Tensor)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
    }
}
