//! Reconstruction loss `L = L_mse + λ1·L_ssim + λ2·L_tv` and its gradient
//! with respect to the reconstruction.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter;
use crate::image::Plane;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub ssim_window_sigma: f64,
    pub ssim_window_radius: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    /// Divide the TV term by the pixel count.
    pub tv_normalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 20.0,
            lambda2: 20.0,
            ssim_window_sigma: 1.5,
            ssim_window_radius: 5,
            ssim_c1: 0.02,
            ssim_c2: 0.06,
            tv_normalize: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if !(self.ssim_c1 > 0.0) || !(self.ssim_c2 > 0.0) {
            return Err(Error::config("SSIM stabilizers must be positive"));
        }
        if !(self.ssim_window_sigma > 0.0) {
            return Err(Error::config("SSIM window sigma must be positive"));
        }
        Ok(())
    }

    pub fn window_taps(&self) -> Vec<f64> {
        filter::gaussian_1d(self.ssim_window_sigma, self.ssim_window_radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub mse: f64,
    pub ssim: f64,
    pub tv: f64,
    pub total: f64,
}

pub fn loss_mse(out: &Plane, reference: &Plane) -> Result<f64> {
    out.same_dims(reference)?;
    let sum: f64 = out.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / out.len() as f64)
}

/// Local SSIM statistics over every window position fully inside the image.
struct SsimTerms {
    h: usize,
    w: usize,
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    map: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn ssim_terms(x: &Plane, y: &Plane, cfg: &LossConfig) -> Result<SsimTerms> {
    x.same_dims(y)?;
    let (h, w) = x.dims();
    let k = 2 * cfg.ssim_window_radius + 1;
    if h < k || w < k {
        return Err(Error::config(format!("image {h}x{w} smaller than {k}x{k} SSIM window")));
    }
    let taps = cfg.window_taps();
    let (xs, ys) = (x.as_slice(), y.as_slice());
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();
    let mu_x = filter::filter_valid(xs, h, w, &taps);
    let mu_y = filter::filter_valid(ys, h, w, &taps);
    let e_xx = filter::filter_valid(&xx, h, w, &taps);
    let e_yy = filter::filter_valid(&yy, h, w, &taps);
    let e_xy = filter::filter_valid(&xy, h, w, &taps);
    let n = mu_x.len();
    let (mut map, mut a2v, mut b1v, mut b2v) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sx = e_xx[i] - mx * mx;
        let sy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        let a1 = 2.0 * mx * my + cfg.ssim_c1;
        let a2 = 2.0 * sxy + cfg.ssim_c2;
        let b1 = mx * mx + my * my + cfg.ssim_c1;
        let b2 = sx + sy + cfg.ssim_c2;
        map.push(a1 * a2 / (b1 * b2));
        a2v.push(a2);
        b1v.push(b1);
        b2v.push(b2);
    }
    Ok(SsimTerms { h, w, mu_x, mu_y, map, a2: a2v, b1: b1v, b2: b2v })
}

/// Local SSIM map (Gaussian window, valid positions only).
pub fn ssim_map(x: &Plane, y: &Plane, cfg: &LossConfig) -> Result<Vec<f64>> {
    Ok(ssim_terms(x, y, cfg)?.map)
}

/// Mean of the local SSIM map.
pub fn ssim(x: &Plane, y: &Plane, cfg: &LossConfig) -> Result<f64> {
    let map = ssim_map(x, y, cfg)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

pub fn loss_ssim(out: &Plane, reference: &Plane, cfg: &LossConfig) -> Result<f64> {
    Ok(1.0 - ssim(out, reference, cfg)?)
}

/// Anisotropic total variation of the residual `out - reference`, summed
/// over interior neighbor pairs.
pub fn loss_tv(out: &Plane, reference: &Plane) -> Result<f64> {
    out.same_dims(reference)?;
    let (h, w) = out.dims();
    let r: Vec<f64> = out.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| a - b).collect();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = r[y * w + x];
            if x + 1 < w {
                sum += (r[y * w + x + 1] - v).abs();
            }
            if y + 1 < h {
                sum += (r[(y + 1) * w + x] - v).abs();
            }
        }
    }
    Ok(sum)
}

fn tv_scale(out: &Plane, cfg: &LossConfig) -> f64 {
    if cfg.tv_normalize {
        1.0 / out.len() as f64
    } else {
        1.0
    }
}

pub fn loss_components(out: &Plane, reference: &Plane, cfg: &LossConfig) -> Result<LossBreakdown> {
    let mse = loss_mse(out, reference)?;
    let ssim = loss_ssim(out, reference, cfg)?;
    let tv = loss_tv(out, reference)? * tv_scale(out, cfg);
    Ok(LossBreakdown { mse, ssim, tv, total: mse + cfg.lambda1 * ssim + cfg.lambda2 * tv })
}

pub fn loss_total(out: &Plane, reference: &Plane, cfg: &LossConfig) -> Result<f64> {
    Ok(loss_components(out, reference, cfg)?.total)
}

/// Loss value and `∂L/∂out`.
pub fn loss_total_with_grad(out: &Plane, reference: &Plane, cfg: &LossConfig) -> Result<(LossBreakdown, Plane)> {
    let parts = loss_components(out, reference, cfg)?;
    let (h, w) = out.dims();
    let n = out.len() as f64;
    let (xs, ys) = (out.as_slice(), reference.as_slice());

    let mut grad: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| 2.0 * (a - b) / n).collect();

    if cfg.lambda1 != 0.0 {
        let t = ssim_terms(out, reference, cfg)?;
        let taps = cfg.window_taps();
        let p = t.map.len() as f64;
        let m = t.map.len();
        let (mut d_mu, mut d_exx, mut d_exy) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        for i in 0..m {
            let (mx, my, s) = (t.mu_x[i], t.mu_y[i], t.map[i]);
            let (a1, a2, b1, b2) = (2.0 * mx * my + cfg.ssim_c1, t.a2[i], t.b1[i], t.b2[i]);
            let den = b1 * b2;
            // ∂S/∂μx with σx², σxy depending on μx
            let num_d = 2.0 * my * a2 - 2.0 * my * a1;
            d_mu.push(num_d / den - s * (2.0 * mx / b1 - 2.0 * mx / b2));
            d_exx.push(-s / b2);
            d_exy.push(2.0 * a1 / den);
        }
        let g_mu = filter::filter_valid_adjoint(&d_mu, t.h, t.w, &taps);
        let g_exx = filter::filter_valid_adjoint(&d_exx, t.h, t.w, &taps);
        let g_exy = filter::filter_valid_adjoint(&d_exy, t.h, t.w, &taps);
        let scale = -cfg.lambda1 / p;
        for i in 0..grad.len() {
            grad[i] += scale * (g_mu[i] + 2.0 * xs[i] * g_exx[i] + ys[i] * g_exy[i]);
        }
    }

    if cfg.lambda2 != 0.0 {
        let scale = cfg.lambda2 * tv_scale(out, cfg);
        let r: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a - b).collect();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    let s = sign(r[i + 1] - r[i]) * scale;
                    grad[i + 1] += s;
                    grad[i] -= s;
                }
                if y + 1 < h {
                    let s = sign(r[i + w] - r[i]) * scale;
                    grad[i + w] += s;
                    grad[i] -= s;
                }
            }
        }
    }
    Ok((parts, Plane::new(h, w, grad)?))
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
