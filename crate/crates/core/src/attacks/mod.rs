//! Cropping-paste attack simulation: cut an object out along its mask,
//! rotate and scale it about its centroid, paste it into another image, then
//! run pixel distortions over the composite.

mod distort;
pub mod jpeg;

use std::f64::consts::FRAC_PI_4;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use distort::{
    distort, evaluation_bank, gaussian_blur, gaussian_kernel, hsv_to_rgb, jpeg_sweep, median_blur,
    rgb_to_hsv, DistortionKind, DistortionSpec,
};

use crate::error::{invalid, Error, Result};
use crate::moments::compute_moments;
use crate::raster::{check_same_dims, warp, warp_mask, BinaryMask, Image, SimilarityTransform};
use crate::seed;

pub const MAX_ROTATION: f64 = FRAC_PI_4;
pub const SCALE_BOUNDS: (f64, f64) = (0.75, 1.5);
const PLACEMENT_TRIES: usize = 100;

/// Sampling ranges for the geometric part of the attack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRanges {
    /// Radians, inclusive.
    pub rotation: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for AttackRanges {
    fn default() -> Self {
        Self {
            rotation: (-MAX_ROTATION, MAX_ROTATION),
            scale: SCALE_BOUNDS,
        }
    }
}

impl AttackRanges {
    pub fn fixed(rotation: f64, scale: f64) -> Self {
        Self {
            rotation: (rotation, rotation),
            scale: (scale, scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        const SLACK: f64 = 1e-9;
        let (r0, r1) = self.rotation;
        let (s0, s1) = self.scale;
        if !(r0 <= r1 && r0 >= -MAX_ROTATION - SLACK && r1 <= MAX_ROTATION + SLACK) {
            return Err(invalid(format!(
                "rotation range [{r0}, {r1}] must lie within ±π/4"
            )));
        }
        if !(s0 <= s1 && s0 >= SCALE_BOUNDS.0 - SLACK && s1 <= SCALE_BOUNDS.1 + SLACK) {
            return Err(invalid(format!(
                "scale range [{s0}, {s1}] must lie within [0.75, 1.5]"
            )));
        }
        Ok(())
    }
}

/// One cropping-paste composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Radians, about the object centroid.
    pub rotation: f64,
    pub scale: f64,
    /// Translation applied after rotating and scaling about the centroid.
    pub paste_offset: (f64, f64),
    #[serde(default)]
    pub background_id: String,
}

impl AttackSpec {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            scale: 1.0,
            paste_offset: (0.0, 0.0),
            background_id: String::new(),
        }
    }

    /// Object frame → background frame for an object with the given centroid.
    pub fn transform(&self, centroid: (f64, f64)) -> Result<SimilarityTransform> {
        SimilarityTransform::new(self.paste_offset, self.rotation, self.scale, centroid)
    }

    pub fn describe(&self) -> String {
        format!(
            "rot={:.4};scale={:.4};dx={:.4};dy={:.4}",
            self.rotation.to_degrees(),
            self.scale,
            self.paste_offset.0,
            self.paste_offset.1
        )
    }
}

/// Whether every pixel of the warped mask lands inside a `w × h` frame.
fn placement_fits(mask: &BinaryMask, t: &SimilarityTransform, w: usize, h: usize) -> Result<bool> {
    let pad = t.scale.ceil() as usize + 2;
    let shifted = t.then(&SimilarityTransform::translate(pad as f64, pad as f64));
    let probe = warp_mask(mask, &shifted, w + 2 * pad, h + 2 * pad)?;
    Ok(match probe.bbox() {
        None => false,
        Some(b) => b.x_min >= pad && b.y_min >= pad && b.x_max < pad + w && b.y_max < pad + h,
    })
}

/// Draw rotation and scale uniformly from `ranges`, then an offset that keeps
/// the transformed object inside the background.
pub fn sample_attack(
    rng_seed: u64,
    object_mask: &BinaryMask,
    background_dims: (usize, usize),
    ranges: &AttackRanges,
) -> Result<AttackSpec> {
    ranges.validate()?;
    let m = compute_moments(object_mask)?;
    let centroid = m.centroid();
    let mut rng = seed::rng(rng_seed);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    };
    let rotation = draw(&mut rng, ranges.rotation);
    let scale = draw(&mut rng, ranges.scale);

    let base = SimilarityTransform::new((0.0, 0.0), rotation, scale, centroid)?.to_affine();
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in object_mask.iter_true() {
        let (u, v) = base.apply(x as f64, y as f64);
        x0 = x0.min(u);
        y0 = y0.min(v);
        x1 = x1.max(u);
        y1 = y1.max(v);
    }
    let (bw, bh) = background_dims;
    let x_range = (-x0, (bw as f64 - 1.0) - x1);
    let y_range = (-y0, (bh as f64 - 1.0) - y1);
    if x_range.0 > x_range.1 || y_range.0 > y_range.1 {
        return Err(Error::PlacementInfeasible(format!(
            "object of extent {:.1}x{:.1} at scale {scale:.3} does not fit a {bw}x{bh} background",
            x1 - x0 + 1.0,
            y1 - y0 + 1.0
        )));
    }
    for _ in 0..PLACEMENT_TRIES {
        let spec = AttackSpec {
            rotation,
            scale,
            paste_offset: (draw(&mut rng, x_range), draw(&mut rng, y_range)),
            background_id: String::new(),
        };
        if placement_fits(object_mask, &spec.transform(centroid)?, bw, bh)? {
            return Ok(spec);
        }
    }
    Err(Error::PlacementInfeasible(format!(
        "no placement found in {PLACEMENT_TRIES} tries"
    )))
}

/// Paste the masked object into `background` under `spec`. Returns the
/// composite and the ground-truth mask of the pasted object.
pub fn crop_paste(
    object_img: &Image,
    object_mask: &BinaryMask,
    background: &Image,
    spec: &AttackSpec,
) -> Result<(Image, BinaryMask)> {
    check_same_dims(object_img.dims(), object_mask.dims())?;
    let centroid = compute_moments(object_mask)?.centroid();
    let t = spec.transform(centroid)?;
    let (bw, bh) = background.dims();
    if !placement_fits(object_mask, &t, bw, bh)? {
        return Err(Error::PlacementInfeasible(format!(
            "attack {} leaves the {bw}x{bh} background",
            spec.describe()
        )));
    }
    let gt = warp_mask(object_mask, &t, bw, bh)?;
    let warped = warp(object_img, &t, bw, bh, 0.0)?;
    let mut composite = background.clone();
    for (i, &inside) in gt.data().iter().enumerate() {
        if inside {
            composite.data_mut()[i * 3..i * 3 + 3]
                .copy_from_slice(&warped.data()[i * 3..i * 3 + 3]);
        }
    }
    Ok((composite, gt))
}

/// `crop_paste` followed by each distortion in order. The returned mask is the
/// undistorted geometric ground truth.
pub fn attack_pipeline(
    object_img: &Image,
    object_mask: &BinaryMask,
    background: &Image,
    attack: &AttackSpec,
    distortions: &[DistortionSpec],
    rng_seed: u64,
) -> Result<(Image, BinaryMask)> {
    let (mut img, gt) = crop_paste(object_img, object_mask, background, attack)?;
    for (i, d) in distortions.iter().enumerate() {
        img = distort(&img, d, seed::derive(rng_seed, i as u64))?;
    }
    Ok((img, gt))
}
