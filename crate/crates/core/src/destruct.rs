//! Subregion destruction: intensity remapping through a random cubic Bézier
//! curve, gamma brightness change, and Gaussian blur, combined per subregion
//! by independent coin flips in that fixed order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::filter;
use crate::image::{Image, Plane};

/// Minimum lookup-table size accepted by [`make_bezier_map`].
pub const MIN_LUT_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Subregion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Subregion {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.top + self.height && x >= self.left && x < self.left + self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TransformKind {
    Nonlinear,
    Brightness,
    Noise,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [Self::Nonlinear, Self::Brightness, Self::Noise];

    /// Short command-line name.
    pub fn short_name(self) -> &'static str {
        match self {
            Self::Nonlinear => "nl",
            Self::Brightness => "b",
            Self::Noise => "ns",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        match s {
            "nl" => Some(Self::Nonlinear),
            "b" => Some(Self::Brightness),
            "ns" => Some(Self::Noise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TransformSpec {
    pub prob_nonlinear: f64,
    pub prob_brightness: f64,
    pub prob_noise: f64,
    pub gamma_choices: Vec<f64>,
    pub blur_sigma: f64,
    pub n_subregions: usize,
    pub subregion_size: usize,
    pub lut_resolution: usize,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            prob_nonlinear: 0.6,
            prob_brightness: 0.6,
            prob_noise: 0.6,
            gamma_choices: vec![0.3, 3.0],
            blur_sigma: 3.0,
            n_subregions: 4,
            subregion_size: 16,
            lut_resolution: 1024,
        }
    }
}

impl TransformSpec {
    pub fn probability(&self, kind: TransformKind) -> f64 {
        match kind {
            TransformKind::Nonlinear => self.prob_nonlinear,
            TransformKind::Brightness => self.prob_brightness,
            TransformKind::Noise => self.prob_noise,
        }
    }

    pub fn set_probability(&mut self, kind: TransformKind, p: f64) {
        match kind {
            TransformKind::Nonlinear => self.prob_nonlinear = p,
            TransformKind::Brightness => self.prob_brightness = p,
            TransformKind::Noise => self.prob_noise = p,
        }
    }

    /// Turns a transform off entirely.
    pub fn disable(&mut self, kind: TransformKind) {
        self.set_probability(kind, 0.0);
    }

    /// Applies exactly the listed transforms to every subregion and nothing else.
    pub fn force(&mut self, kinds: &[TransformKind]) {
        for kind in TransformKind::ALL {
            self.set_probability(kind, if kinds.contains(&kind) { 1.0 } else { 0.0 });
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in TransformKind::ALL {
            let p = self.probability(kind);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("probability for {} is {p}", kind.short_name())));
            }
        }
        if self.gamma_choices.is_empty() || self.gamma_choices.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::config("gamma choices must be non-empty and positive"));
        }
        if !(self.blur_sigma > 0.0) || !self.blur_sigma.is_finite() {
            return Err(Error::config(format!("blur sigma {} must be positive", self.blur_sigma)));
        }
        if self.n_subregions == 0 {
            return Err(Error::config("need at least one subregion"));
        }
        if self.subregion_size < 2 {
            return Err(Error::config(format!("subregion size {} below 2", self.subregion_size)));
        }
        if self.lut_resolution < MIN_LUT_RESOLUTION {
            return Err(Error::config(format!(
                "lut resolution {} below {MIN_LUT_RESOLUTION}",
                self.lut_resolution
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlPoint {
    pub x: f64,
    pub y: f64,
}

impl ControlPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        ControlPoint { x, y }
    }
}

/// Monotone intensity map built from a cubic Bézier curve with fixed
/// endpoints `(0,0)` and `(1,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierMap {
    pub p1: ControlPoint,
    pub p2: ControlPoint,
    pub p3: ControlPoint,
    pub p4: ControlPoint,
    pub decreasing: bool,
    lut: Vec<f64>,
}

impl BezierMap {
    /// Builds the map for the given midpoints. Midpoints are swapped when
    /// needed so their x-coordinates ascend.
    pub fn new(mut p2: ControlPoint, mut p3: ControlPoint, decreasing: bool, resolution: usize) -> Result<Self> {
        if resolution < MIN_LUT_RESOLUTION {
            return Err(Error::config(format!(
                "lut resolution {resolution} below {MIN_LUT_RESOLUTION}"
            )));
        }
        for p in [p2, p3] {
            if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                return Err(Error::config(format!("control point ({}, {}) outside unit square", p.x, p.y)));
            }
        }
        if p2.x > p3.x {
            core::mem::swap(&mut p2, &mut p3);
        }
        let mut map = BezierMap {
            p1: ControlPoint::new(0.0, 0.0),
            p2,
            p3,
            p4: ControlPoint::new(1.0, 1.0),
            decreasing,
            lut: Vec::new(),
        };
        map.lut = map.build_lut(resolution);
        Ok(map)
    }

    pub fn identity(resolution: usize) -> Result<Self> {
        Self::new(ControlPoint::new(0.0, 0.0), ControlPoint::new(1.0, 1.0), false, resolution)
    }

    /// Point on the curve at parameter `t ∈ [0,1]`.
    pub fn curve_point(&self, t: f64) -> ControlPoint {
        let s = 1.0 - t;
        let (b0, b1, b2, b3) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
        ControlPoint {
            x: b0 * self.p1.x + b1 * self.p2.x + b2 * self.p3.x + b3 * self.p4.x,
            y: b0 * self.p1.y + b1 * self.p2.y + b2 * self.p3.y + b3 * self.p4.y,
        }
    }

    fn build_lut(&self, resolution: usize) -> Vec<f64> {
        let last = (resolution - 1) as f64;
        let samples: Vec<ControlPoint> = (0..resolution).map(|k| self.curve_point(k as f64 / last)).collect();
        let mut lut = Vec::with_capacity(resolution);
        let mut k = 0;
        for i in 0..resolution {
            let u = i as f64 / last;
            while k + 2 < resolution && samples[k + 1].x < u {
                k += 1;
            }
            let (a, b) = (samples[k], samples[k + 1]);
            let y = if b.x > a.x {
                let f = ((u - a.x) / (b.x - a.x)).clamp(0.0, 1.0);
                a.y + f * (b.y - a.y)
            } else {
                b.y
            };
            let y = y.clamp(0.0, 1.0);
            lut.push(if self.decreasing { 1.0 - y } else { y });
        }
        lut
    }

    pub fn lut(&self) -> &[f64] {
        &self.lut
    }

    /// Looks up `v ∈ [0,1]` with linear interpolation between table entries.
    pub fn map_value(&self, v: f64) -> f64 {
        let last = self.lut.len() - 1;
        let pos = v.clamp(0.0, 1.0) * last as f64;
        let i = (libm::floor(pos) as usize).min(last - 1);
        let f = pos - i as f64;
        self.lut[i] + f * (self.lut[i + 1] - self.lut[i])
    }
}

/// Random subregion placements, uniform over valid top-left corners.
pub fn sample_subregions<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    spec: &TransformSpec,
    rng: &mut R,
) -> Result<Vec<Subregion>> {
    let size = spec.subregion_size;
    if size > height.min(width) {
        return Err(Error::config(format!(
            "subregion size {size} exceeds image {height}x{width}"
        )));
    }
    Ok((0..spec.n_subregions)
        .map(|_| Subregion {
            top: rng.gen_range(0..=height - size),
            left: rng.gen_range(0..=width - size),
            height: size,
            width: size,
        })
        .collect())
}

/// Draws random midpoints and a random flip.
pub fn make_bezier_map<R: Rng + ?Sized>(rng: &mut R, resolution: usize) -> Result<BezierMap> {
    let p2 = ControlPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
    let p3 = ControlPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
    let decreasing = rng.gen::<bool>();
    BezierMap::new(p2, p3, decreasing, resolution)
}

pub fn apply_nonlinear(region: &Plane, map: &BezierMap) -> Plane {
    region.map(|v| map.map_value(v))
}

pub fn apply_brightness(region: &Plane, gamma: f64) -> Result<Plane> {
    if !(gamma > 0.0) {
        return Err(Error::config(format!("gamma {gamma} must be positive")));
    }
    Ok(region.map(|v| libm::pow(v.max(0.0), gamma)))
}

/// Gaussian blur with radius `ceil(3σ)` and reflect-padded borders.
pub fn apply_noise(region: &Plane, sigma: f64) -> Result<Plane> {
    if !(sigma > 0.0) {
        return Err(Error::config(format!("blur sigma {sigma} must be positive")));
    }
    let taps = filter::gaussian_1d(sigma, filter::blur_radius(sigma));
    Ok(filter::convolve_reflect(region, &taps))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BezierDraw {
    pub p2: ControlPoint,
    pub p3: ControlPoint,
    pub decreasing: bool,
}

/// Which transforms fired on a subregion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Applied {
    pub nonlinear: bool,
    pub brightness: bool,
    pub noise: bool,
}

impl Applied {
    pub fn get(&self, kind: TransformKind) -> bool {
        match kind {
            TransformKind::Nonlinear => self.nonlinear,
            TransformKind::Brightness => self.brightness,
            TransformKind::Noise => self.noise,
        }
    }

    /// Index 0..8 of the combination, nonlinear as the high bit.
    pub fn combination_index(&self) -> usize {
        (self.nonlinear as usize) << 2 | (self.brightness as usize) << 1 | self.noise as usize
    }

    /// `"nl+b+ns"`-style label; `"none"` when nothing fired.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = TransformKind::ALL
            .iter()
            .filter(|k| self.get(**k))
            .map(|k| k.short_name())
            .collect();
        if parts.is_empty() {
            String::from("none")
        } else {
            parts.join("+")
        }
    }
}

/// Every random draw made for one subregion.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubregionRecord {
    pub region: Subregion,
    /// Uniform draws in `[0,1)` compared against the three probabilities.
    pub draws: [f64; 3],
    pub applied: Applied,
    pub bezier: Option<BezierDraw>,
    pub gamma: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DestructionRecord {
    pub subregions: Vec<SubregionRecord>,
}

impl DestructionRecord {
    pub fn regions(&self) -> impl Iterator<Item = &Subregion> {
        self.subregions.iter().map(|s| &s.region)
    }

    pub fn applied(&self) -> impl Iterator<Item = Applied> + '_ {
        self.subregions.iter().map(|s| s.applied)
    }
}

/// The per-subregion coin-flip sequence: nonlinear, then brightness, then
/// noise, each applied when its uniform draw falls below its probability.
pub fn transform_subregion<R: Rng + ?Sized>(
    block: Plane,
    region: Subregion,
    spec: &TransformSpec,
    rng: &mut R,
) -> Result<(Plane, SubregionRecord)> {
    let mut out = block;
    let mut rec = SubregionRecord {
        region,
        draws: [0.0; 3],
        applied: Applied::default(),
        bezier: None,
        gamma: None,
        sigma: None,
    };

    let r = rng.gen::<f64>();
    rec.draws[0] = r;
    if r < spec.prob_nonlinear {
        let map = make_bezier_map(rng, spec.lut_resolution)?;
        out = apply_nonlinear(&out, &map);
        rec.applied.nonlinear = true;
        rec.bezier = Some(BezierDraw { p2: map.p2, p3: map.p3, decreasing: map.decreasing });
    }

    let r = rng.gen::<f64>();
    rec.draws[1] = r;
    if r < spec.prob_brightness {
        let gamma = spec.gamma_choices[rng.gen_range(0..spec.gamma_choices.len())];
        out = apply_brightness(&out, gamma)?;
        rec.applied.brightness = true;
        rec.gamma = Some(gamma);
    }

    let r = rng.gen::<f64>();
    rec.draws[2] = r;
    if r < spec.prob_noise {
        out = apply_noise(&out, spec.blur_sigma)?;
        rec.applied.noise = true;
        rec.sigma = Some(spec.blur_sigma);
    }
    Ok((out, rec))
}

/// Destroys random subregions of `img`. Pixels outside every subregion are
/// copied unchanged; overlapping subregions compose in sampling order.
pub fn destroy<R: Rng + ?Sized>(
    img: &Image,
    spec: &TransformSpec,
    rng: &mut R,
) -> Result<(Image, DestructionRecord)> {
    spec.validate()?;
    let regions = sample_subregions(img.height(), img.width(), spec, rng)?;
    let mut canvas: Plane = img.as_plane().clone();
    let mut record = DestructionRecord { subregions: Vec::with_capacity(regions.len()) };
    for region in regions {
        let block = canvas.crop(region.top, region.left, region.height, region.width)?;
        let (block, rec) = transform_subregion(block, region, spec, rng)?;
        // values stay in [0,1] up to rounding in the blur
        let block = block.map(|v| v.clamp(0.0, 1.0));
        canvas.paste(&block, region.top, region.left)?;
        record.subregions.push(rec);
    }
    Ok((Image::from_plane(canvas)?, record))
}
