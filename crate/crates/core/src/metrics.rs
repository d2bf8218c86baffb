//! Objective fusion-quality scores and the per-pair report.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use core::f64::consts::PI;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::loss::{self, LossConfig};

/// Mean SSIM of the fused image against each source.
pub fn metric_ssim_fusion(fused: &Plane, src1: &Plane, src2: &Plane, cfg: &LossConfig) -> Result<f64> {
    src1.same_dims(src2)?;
    Ok((loss::ssim(fused, src1, cfg)? + loss::ssim(fused, src2, cfg)?) / 2.0)
}

pub fn mse_avg(fused: &Plane, src1: &Plane, src2: &Plane) -> Result<f64> {
    src1.same_dims(src2)?;
    Ok((loss::loss_mse(fused, src1)? + loss::loss_mse(fused, src2)?) / 2.0)
}

/// Sobel magnitude and orientation (in `(-π/2, π/2]`) on interior pixels.
fn sobel(p: &Plane) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = p.dims();
    let n = (h - 2) * (w - 2);
    let (mut mag, mut ang) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let at = |y: usize, x: usize| p.get(y, x);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            mag.push(libm::sqrt(gx * gx + gy * gy));
            let mut a = libm::atan2(gy, gx);
            if a > FRAC_PI_2 {
                a -= PI;
            } else if a <= -FRAC_PI_2 {
                a += PI;
            }
            ang.push(a);
        }
    }
    (mag, ang)
}

/// Sigmoid constants of the gradient-transfer score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QabfParams {
    pub kappa_g: f64,
    pub sigma_g: f64,
    pub kappa_a: f64,
    pub sigma_a: f64,
}

impl Default for QabfParams {
    fn default() -> Self {
        QabfParams { kappa_g: -15.0, sigma_g: 0.5, kappa_a: -22.0, sigma_a: 0.8 }
    }
}

/// Sigmoid scaled so that an input of 1 maps to exactly 1.
fn preservation(v: f64, kappa: f64, sigma: f64) -> f64 {
    (1.0 + libm::exp(kappa * (1.0 - sigma))) / (1.0 + libm::exp(kappa * (v - sigma)))
}

fn edge_preservation(
    (gs, as_): (&[f64], &[f64]),
    (gf, af): (&[f64], &[f64]),
    q: &QabfParams,
) -> Vec<f64> {
    gs.iter()
        .zip(as_)
        .zip(gf.iter().zip(af))
        .map(|((&g_s, &a_s), (&g_f, &a_f))| {
            let strength = if g_s > g_f {
                g_f / g_s
            } else if g_f > 0.0 {
                g_s / g_f
            } else {
                1.0
            };
            let mut d = (a_s - a_f).abs() % PI;
            if d > FRAC_PI_2 {
                d = PI - d;
            }
            let orient = 1.0 - d / FRAC_PI_2;
            preservation(strength, q.kappa_g, q.sigma_g) * preservation(orient, q.kappa_a, q.sigma_a)
        })
        .collect()
}

/// Gradient-transfer score in `[0, 1]`: how much of each source's edge
/// strength and orientation survives in the fused image, weighted by the
/// source edge strength.
pub fn metric_qabf(fused: &Plane, src1: &Plane, src2: &Plane) -> Result<f64> {
    metric_qabf_with(fused, src1, src2, &QabfParams::default())
}

pub fn metric_qabf_with(fused: &Plane, src1: &Plane, src2: &Plane, q: &QabfParams) -> Result<f64> {
    fused.same_dims(src1)?;
    fused.same_dims(src2)?;
    let (h, w) = fused.dims();
    if h < 3 || w < 3 {
        return Err(Error::config(format!("gradient score needs at least 3x3, got {h}x{w}")));
    }
    let (g1, a1) = sobel(src1);
    let (g2, a2) = sobel(src2);
    let (gf, af) = sobel(fused);
    let q1 = edge_preservation((&g1, &a1), (&gf, &af), q);
    let q2 = edge_preservation((&g2, &a2), (&gf, &af), q);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..q1.len() {
        num += q1[i] * g1[i] + q2[i] * g2[i];
        den += g1[i] + g2[i];
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Shannon entropy in bits of the 256-level histogram.
pub fn entropy(img: &Plane) -> f64 {
    let mut hist = [0usize; 256];
    for &v in img.as_slice() {
        hist[libm::round(v.clamp(0.0, 1.0) * 255.0) as usize] += 1;
    }
    let n = img.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log2(p)
        })
        .sum()
}

/// `sqrt(RF² + CF²)` from mean squared horizontal and vertical differences.
pub fn spatial_frequency(img: &Plane) -> f64 {
    let (h, w) = img.dims();
    let (mut rf, mut cf) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if x > 0 {
                let d = img.get(y, x) - img.get(y, x - 1);
                rf += d * d;
            }
            if y > 0 {
                let d = img.get(y, x) - img.get(y - 1, x);
                cf += d * d;
            }
        }
    }
    let rf = if w > 1 { rf / (h * (w - 1)) as f64 } else { 0.0 };
    let cf = if h > 1 { cf / ((h - 1) * w) as f64 } else { 0.0 };
    libm::sqrt(rf + cf)
}

/// Mean of `sqrt((dx² + dy²)/2)` over forward differences.
pub fn average_gradient(img: &Plane) -> f64 {
    let (h, w) = img.dims();
    if h < 2 || w < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let dx = img.get(y, x + 1) - img.get(y, x);
            let dy = img.get(y + 1, x) - img.get(y, x);
            sum += libm::sqrt((dx * dx + dy * dy) / 2.0);
        }
    }
    sum / ((h - 1) * (w - 1)) as f64
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRow {
    pub pair_id: String,
    pub ssim_avg: f64,
    pub qabf: f64,
    pub mse_avg: f64,
    pub entropy: f64,
    pub spatial_frequency: f64,
    pub average_gradient: f64,
}

impl MetricRow {
    pub const COLUMNS: [&'static str; 7] =
        ["pair_id", "ssim_avg", "qabf", "mse_avg", "entropy", "spatial_frequency", "average_gradient"];

    fn values(&self) -> [f64; 6] {
        [self.ssim_avg, self.qabf, self.mse_avg, self.entropy, self.spatial_frequency, self.average_gradient]
    }
}

pub fn evaluate_pair(pair_id: &str, fused: &Plane, src1: &Plane, src2: &Plane, cfg: &LossConfig) -> Result<MetricRow> {
    let row = MetricRow {
        pair_id: pair_id.into(),
        ssim_avg: metric_ssim_fusion(fused, src1, src2, cfg)?,
        qabf: metric_qabf(fused, src1, src2)?,
        mse_avg: mse_avg(fused, src1, src2)?,
        entropy: entropy(fused),
        spatial_frequency: spatial_frequency(fused),
        average_gradient: average_gradient(fused),
    };
    if row.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite metric for pair {pair_id}")));
    }
    Ok(row)
}

/// Per-pair rows sorted by id, plus their column means.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionReport {
    pub rows: Vec<MetricRow>,
    pub average: MetricRow,
}

impl FusionReport {
    pub const AVERAGE_ID: &'static str = "average";

    pub fn new(mut rows: Vec<MetricRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::config("report needs at least one pair"));
        }
        rows.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        let mut sums = [0.0; 6];
        for r in &rows {
            for (s, v) in sums.iter_mut().zip(r.values()) {
                *s += v;
            }
        }
        let n = rows.len() as f64;
        let [a, b, c, d, e, f] = sums.map(|s| s / n);
        let average = MetricRow {
            pair_id: Self::AVERAGE_ID.into(),
            ssim_avg: a,
            qabf: b,
            mse_avg: c,
            entropy: d,
            spatial_frequency: e,
            average_gradient: f,
        };
        Ok(FusionReport { rows, average })
    }

    /// Per-pair rows followed by the average row.
    pub fn all_rows(&self) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().chain(core::iter::once(&self.average))
    }

    pub fn to_csv(&self) -> String {
        let mut s = MetricRow::COLUMNS.join(",");
        s.push('\n');
        for r in self.all_rows() {
            s.push_str(&r.pair_id);
            for v in r.values() {
                let _ = write!(s, ",{v:.6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("| {} |\n", MetricRow::COLUMNS.join(" | "));
        s.push_str(&format!("|{}\n", vec!["---|"; MetricRow::COLUMNS.len()].concat()));
        for r in self.all_rows() {
            let _ = write!(s, "| {} |", r.pair_id);
            for v in r.values() {
                let _ = write!(s, " {v:.4} |");
            }
            s.push('\n');
        }
        s
    }
}
