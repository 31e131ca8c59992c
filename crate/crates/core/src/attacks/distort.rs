//! Pixel-level distortions applied after the geometric attack.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::jpeg::jpeg_round_trip;
use crate::error::{invalid, Error, Result};
use crate::raster::Image;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    None,
    GaussianBlur,
    GaussianNoise,
    Jpeg,
    MedianBlur,
    SaltPepper,
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 10] = [
        DistortionKind::None,
        DistortionKind::GaussianBlur,
        DistortionKind::GaussianNoise,
        DistortionKind::Jpeg,
        DistortionKind::MedianBlur,
        DistortionKind::SaltPepper,
        DistortionKind::Brightness,
        DistortionKind::Contrast,
        DistortionKind::Saturation,
        DistortionKind::Hue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::None => "none",
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::GaussianNoise => "gaussian_noise",
            DistortionKind::Jpeg => "jpeg",
            DistortionKind::MedianBlur => "median_blur",
            DistortionKind::SaltPepper => "salt_pepper",
            DistortionKind::Brightness => "brightness",
            DistortionKind::Contrast => "contrast",
            DistortionKind::Saturation => "saturation",
            DistortionKind::Hue => "hue",
        }
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown distortion kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    #[serde(default)]
    pub parameter: f64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, parameter: f64) -> Result<Self> {
        let s = Self { kind, parameter };
        s.validate()?;
        Ok(s)
    }

    pub fn none() -> Self {
        Self {
            kind: DistortionKind::None,
            parameter: 0.0,
        }
    }

    /// Row label such as `jpeg:50` or `none`.
    pub fn label(&self) -> String {
        match self.kind {
            DistortionKind::None => "none".into(),
            k => format!("{}:{}", k.name(), self.parameter),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.parameter;
        let integral = p.fract() == 0.0;
        let ok = match self.kind {
            DistortionKind::None => true,
            DistortionKind::GaussianBlur => p > 0.0 && p <= 3.0,
            DistortionKind::GaussianNoise => p > 0.0 && p <= 0.05,
            DistortionKind::Jpeg => integral && (10.0..=90.0).contains(&p),
            DistortionKind::MedianBlur => p == 3.0 || p == 5.0,
            DistortionKind::SaltPepper => p > 0.0 && p <= 0.1,
            DistortionKind::Brightness | DistortionKind::Contrast | DistortionKind::Saturation => {
                (0.8..=1.2).contains(&p)
            }
            DistortionKind::Hue => (-0.1..=0.1).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "parameter {p} out of range for {}",
                self.kind.name()
            )))
        }
    }
}

impl fmt::Display for DistortionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `kind=value` (or bare `none`).
impl FromStr for DistortionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k, v) = match s.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (s.trim(), None),
        };
        let kind: DistortionKind = k.parse()?;
        let parameter = match (kind, v) {
            (DistortionKind::None, _) => 0.0,
            (_, Some(v)) => v
                .parse::<f64>()
                .map_err(|_| invalid(format!("bad distortion parameter '{v}'")))?,
            (_, None) => return Err(invalid(format!("distortion '{k}' needs a parameter"))),
        };
        Self::new(kind, parameter)
    }
}

/// The single-distortion evaluation bank: nine distortions plus the identity.
pub fn evaluation_bank() -> Vec<DistortionSpec> {
    use DistortionKind::*;
    [
        (None, 0.0),
        (GaussianBlur, 3.0),
        (GaussianNoise, 0.05),
        (Jpeg, 50.0),
        (MedianBlur, 5.0),
        (SaltPepper, 0.1),
        (Brightness, 1.2),
        (Contrast, 1.2),
        (Saturation, 1.2),
        (Hue, 0.1),
    ]
    .into_iter()
    .map(|(kind, parameter)| DistortionSpec { kind, parameter })
    .collect()
}

/// JPEG at every quality from 10 to 90 in steps of 10.
pub fn jpeg_sweep() -> Vec<DistortionSpec> {
    (1..=9)
        .map(|i| DistortionSpec {
            kind: DistortionKind::Jpeg,
            parameter: f64::from(i * 10),
        })
        .collect()
}

pub fn distort(image: &Image, spec: &DistortionSpec, rng_seed: u64) -> Result<Image> {
    spec.validate()?;
    let p = spec.parameter;
    Ok(match spec.kind {
        DistortionKind::None => image.clone(),
        DistortionKind::GaussianBlur => gaussian_blur(image, p),
        DistortionKind::GaussianNoise => {
            let mut rng = seed::rng(rng_seed);
            let normal = Normal::new(0.0, p).expect("sigma validated");
            image.map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        }
        DistortionKind::Jpeg => jpeg_round_trip(image, p as u8),
        DistortionKind::MedianBlur => median_blur(image, p as usize),
        DistortionKind::SaltPepper => salt_pepper(image, p, rng_seed),
        DistortionKind::Brightness => image.map(|v| (v * p).clamp(0.0, 1.0)),
        DistortionKind::Contrast => {
            let mean = image.data().iter().sum::<f64>() / image.data().len() as f64;
            image.map(|v| ((v - mean) * p + mean).clamp(0.0, 1.0))
        }
        DistortionKind::Saturation => map_hsv(image, |h, s, v| (h, (s * p).clamp(0.0, 1.0), v)),
        DistortionKind::Hue => map_hsv(image, |h, s, v| ((h + p).rem_euclid(1.0), s, v)),
    })
}

/// Normalized sampled Gaussian of radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable Gaussian blur with clamped edges.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = image.dims();
    let src = image.data();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut s = 0.0;
                for (j, &kv) in k.iter().enumerate() {
                    let sx = (x as i64 + j as i64 - r).clamp(0, w as i64 - 1) as usize;
                    s += kv * src[(y * w + sx) * 3 + c];
                }
                tmp[(y * w + x) * 3 + c] = s;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut s = 0.0;
                for (j, &kv) in k.iter().enumerate() {
                    let sy = (y as i64 + j as i64 - r).clamp(0, h as i64 - 1) as usize;
                    s += kv * tmp[(sy * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = s;
            }
        }
    }
    Image::from_vec(w, h, out).expect("dimensions unchanged")
}

/// Per-channel k×k median with clamped edges.
pub fn median_blur(image: &Image, k: usize) -> Image {
    let r = (k / 2) as i64;
    let (w, h) = image.dims();
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    let mut win = Vec::with_capacity(k * k);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for c in 0..3 {
                win.clear();
                for dy in -r..=r {
                    let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    for dx in -r..=r {
                        let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                        win.push(src[(sy * w + sx) * 3 + c]);
                    }
                }
                let mid = win.len() / 2;
                let (_, m, _) = win.select_nth_unstable_by(mid, f64::total_cmp);
                out[(y as usize * w + x as usize) * 3 + c] = *m;
            }
        }
    }
    Image::from_vec(w, h, out).expect("dimensions unchanged")
}

/// Sets exactly `round(ratio · pixels)` distinct pixels to black or white.
fn salt_pepper(image: &Image, ratio: f64, rng_seed: u64) -> Image {
    let mut rng = seed::rng(rng_seed);
    let (w, h) = image.dims();
    let total = w * h;
    let count = ((ratio * total as f64).round() as usize).min(total);
    let mut out = image.clone();
    for i in sample(&mut rng, total, count).into_iter() {
        let v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        out.set_pixel(i % w, i / w, [v; 3]);
    }
    out
}

pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u8 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn map_hsv(image: &Image, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> Image {
    let (w, h) = image.dims();
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let (hh, s, v) = rgb_to_hsv(image.pixel(x, y));
            let (hh, s, v) = f(hh, s, v);
            out.set_pixel(x, y, hsv_to_rgb(hh, s, v).map(|c| c.clamp(0.0, 1.0)));
        }
    }
    out
}
