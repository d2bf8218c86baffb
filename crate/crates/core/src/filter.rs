//! Separable smoothing kernels shared by the blur transform, the SSIM window
//! and the region-energy fusion rule.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::Plane;

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_1d(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Truncation radius `ceil(3σ)` used by the blur transform.
pub fn blur_radius(sigma: f64) -> usize {
    libm::ceil(3.0 * sigma) as usize
}

/// Normalized `(2r+1)²` Gaussian kernel, row-major. Separable filtering with
/// [`gaussian_1d`] applies exactly this kernel.
pub fn gaussian_2d(sigma: f64, radius: usize) -> Vec<f64> {
    let g = gaussian_1d(sigma, radius);
    let mut k: Vec<f64> = g.iter().flat_map(|&a| g.iter().map(move |&b| a * b)).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`), valid for
/// any offset.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Same-size separable convolution with reflect-padded borders.
pub fn convolve_reflect(src: &Plane, taps: &[f64]) -> Plane {
    let (h, w) = src.dims();
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = src.row(y);
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * row[reflect_index(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (k, &t) in taps.iter().enumerate() {
            let sy = reflect_index(y as isize + k as isize - r, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            for (o, &s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    }
    Plane::new(h, w, out).expect("dims preserved")
}

/// Valid-mode separable correlation: output is `(h-2r) × (w-2r)`, each value a
/// window fully inside `src`. Caller guarantees `h, w ≥ 2r+1`.
pub fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * ow..(y + 1) * ow];
        for (j, &t) in taps.iter().enumerate() {
            for (o, &s) in out.iter_mut().zip(&row[j..j + ow]) {
                *o += t * s;
            }
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        let dst = &mut out[y * ow..(y + 1) * ow];
        for (i, &t) in taps.iter().enumerate() {
            for (o, &s) in dst.iter_mut().zip(&tmp[(y + i) * ow..(y + i + 1) * ow]) {
                *o += t * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a `(h-2r) × (w-2r)` map back onto
/// the `h × w` grid.
pub fn filter_valid_adjoint(map: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..oh {
        let src = &map[y * ow..(y + 1) * ow];
        for (i, &t) in taps.iter().enumerate() {
            for (o, &s) in tmp[(y + i) * ow..(y + i + 1) * ow].iter_mut().zip(src) {
                *o += t * s;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let src = &tmp[y * ow..(y + 1) * ow];
        let dst = &mut out[y * w..(y + 1) * w];
        for (j, &t) in taps.iter().enumerate() {
            for (o, &s) in dst[j..j + ow].iter_mut().zip(src) {
                *o += t * s;
            }
        }
    }
    out
}
