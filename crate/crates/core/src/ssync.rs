//! Geometric self-synchronization of an object.
//!
//! An object is brought into a canonical `n × n` canvas by
//!
//! 1. zeroing every pixel outside its mask,
//! 2. moving its centroid to the canvas center,
//! 3. rotating it about the centroid until its principal orientation is 0,
//! 4. re-scaling the minimum bounding square of the rotated mask to `n × n`.
//!
//! Steps 2–4 are composed into a single [`SimilarityTransform`] and applied
//! with one bilinear resampling pass. Object pixels on the canvas are
//! normalized by the interpolated mask coverage, so the zeroed background
//! does not bleed into the object edge. The bounding square in step 4 is
//! measured on the rotated pixel centers (each widened by half a pixel), so
//! it does not suffer from re-rasterization jitter. Because step 4 maps the
//! square onto the canvas it also fixes position: with scaling enabled,
//! disabling step 2 only changes the rotation pivot and leaves the result
//! unchanged.
//!
//! Rotation normalization determines the axis only up to a half turn. For
//! attack rotations within ±45° of an object whose principal orientation is
//! itself within ±45° the half-turn branch never flips; outside that envelope
//! the codec resolves the ambiguity by decoding both branches.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::moments::{compute_moments, min_bounding_square, SquareRect, DEFAULT_DEGENERACY_EPS};
use crate::raster::{check_same_dims, warp, warp_mask, BinaryMask, Image, SimilarityTransform};

pub const DEFAULT_CANVAS: usize = 256;
pub const MIN_CANVAS: usize = 16;

/// Switches that replace individual normalization steps with the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncAblation {
    pub disable_cropping: bool,
    pub disable_translation: bool,
    pub disable_rotation: bool,
    pub disable_scale: bool,
}

impl SyncAblation {
    pub const FULL: SyncAblation = SyncAblation {
        disable_cropping: false,
        disable_translation: false,
        disable_rotation: false,
        disable_scale: false,
    };

    /// The ablation rows 1–6: 1 cropping, 2 rotation, 3 scale, 4 translation,
    /// 5 rotation + scale + translation, 6 nothing disabled.
    pub fn from_row(id: u8) -> Option<Self> {
        let mut a = Self::FULL;
        match id {
            1 => a.disable_cropping = true,
            2 => a.disable_rotation = true,
            3 => a.disable_scale = true,
            4 => a.disable_translation = true,
            5 => {
                a.disable_rotation = true;
                a.disable_scale = true;
                a.disable_translation = true;
            }
            6 => {}
            _ => return None,
        }
        Some(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncOptions {
    pub n: usize,
    pub ablation: SyncAblation,
    pub degeneracy_eps: f64,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            n: DEFAULT_CANVAS,
            ablation: SyncAblation::FULL,
            degeneracy_eps: DEFAULT_DEGENERACY_EPS,
        }
    }
}

impl SyncOptions {
    pub fn with_n(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }
}

/// A normalized object: canvas and mask of equal size, background exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncObject {
    canvas: Image,
    mask: BinaryMask,
}

impl SyncObject {
    /// Zeroes the canvas outside `mask`.
    pub fn new(canvas: Image, mask: BinaryMask) -> Result<Self> {
        check_same_dims(canvas.dims(), mask.dims())?;
        if mask.is_empty() {
            return Err(Error::EmptyRegion("sync object mask is empty".into()));
        }
        let canvas = canvas.masked(&mask)?;
        Ok(Self { canvas, mask })
    }

    pub fn canvas(&self) -> &Image {
        &self.canvas
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn size(&self) -> usize {
        self.canvas.width()
    }

    pub fn into_parts(self) -> (Image, BinaryMask) {
        (self.canvas, self.mask)
    }
}

/// How a host-frame object was mapped onto the canvas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncRecord {
    /// Host frame → canvas.
    pub transform: SimilarityTransform,
    pub source_centroid: (f64, f64),
    /// Principal orientation of the source mask, radians.
    pub source_phi: f64,
    pub source_mbs: SquareRect,
    pub degenerate_orientation: bool,
}

/// Zero the background: keep `image` where `mask` is set.
pub fn apply_mask_crop(image: &Image, mask: &BinaryMask) -> Result<Image> {
    check_same_dims(image.dims(), mask.dims())?;
    if mask.is_empty() {
        return Err(Error::EmptyRegion("mask has no object pixels".into()));
    }
    image.masked(mask)
}

pub fn synchronize(
    image: &Image,
    mask: &BinaryMask,
    n: usize,
    ablation: SyncAblation,
) -> Result<(SyncObject, SyncRecord)> {
    synchronize_with(
        image,
        mask,
        &SyncOptions {
            n,
            ablation,
            ..SyncOptions::default()
        },
    )
}

pub fn synchronize_with(
    image: &Image,
    mask: &BinaryMask,
    opts: &SyncOptions,
) -> Result<(SyncObject, SyncRecord)> {
    let n = opts.n;
    if n < MIN_CANVAS {
        return Err(invalid(format!(
            "canvas size must be at least {MIN_CANVAS}, got {n}"
        )));
    }
    let source = if opts.ablation.disable_cropping {
        check_same_dims(image.dims(), mask.dims())?;
        if mask.is_empty() {
            return Err(Error::EmptyRegion("mask has no object pixels".into()));
        }
        image.clone()
    } else {
        apply_mask_crop(image, mask)?
    };

    let (transform, record) = sync_transform(mask, opts)?;
    let warped_mask = warp_mask(mask, &transform, n, n)?;
    if warped_mask.is_empty() {
        return Err(Error::EmptyRegion(
            "object left the canvas after normalization".into(),
        ));
    }
    let mut canvas = warp(&source, &transform, n, n, 0.0)?;
    if !opts.ablation.disable_cropping {
        // Divide by the interpolated mask coverage so that pixels along the
        // object edge are not darkened by the zeroed background.
        let coverage = warp(&mask.to_image(), &transform, n, n, 0.0)?;
        for (i, &inside) in warped_mask.data().iter().enumerate() {
            if inside {
                let c = coverage.data()[3 * i];
                for v in &mut canvas.data_mut()[3 * i..3 * i + 3] {
                    *v /= c;
                }
            }
        }
    }
    Ok((SyncObject::new(canvas, warped_mask)?, record))
}

/// The composed host → canvas transform and its record, without resampling.
pub fn sync_transform(
    mask: &BinaryMask,
    opts: &SyncOptions,
) -> Result<(SimilarityTransform, SyncRecord)> {
    let m = compute_moments(mask)?;
    let centroid = m.centroid();
    let phi = m.principal_orientation();
    let degenerate = m.is_orientation_degenerate(opts.degeneracy_eps);
    let half = (opts.n as f64 - 1.0) / 2.0;
    let a = opts.ablation;

    let shift = if a.disable_translation {
        (0.0, 0.0)
    } else {
        (half - centroid.0, half - centroid.1)
    };
    let rotation = if a.disable_rotation || degenerate {
        0.0
    } else {
        -phi
    };
    // translate, then rotate about the (moved) centroid
    let placed = SimilarityTransform {
        translation: shift,
        rotation,
        scale: 1.0,
        pivot: centroid,
    };

    let transform = if a.disable_scale {
        placed
    } else {
        let aff = placed.to_affine();
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in mask.iter_true() {
            let (u, v) = aff.apply(x as f64, y as f64);
            x0 = x0.min(u);
            y0 = y0.min(v);
            x1 = x1.max(u);
            y1 = y1.max(v);
        }
        let side = (x1 - x0).max(y1 - y0) + 1.0;
        let center = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let k = opts.n as f64 / side;
        let fit = SimilarityTransform {
            translation: (half - center.0, half - center.1),
            rotation: 0.0,
            scale: k,
            pivot: center,
        };
        // re-express about the source centroid
        let composed = placed.then(&fit);
        let (tx, ty) = composed.apply(centroid.0, centroid.1);
        SimilarityTransform {
            translation: (tx - centroid.0, ty - centroid.1),
            rotation,
            scale: k,
            pivot: centroid,
        }
    };

    let record = SyncRecord {
        transform,
        source_centroid: centroid,
        source_phi: phi,
        source_mbs: min_bounding_square(mask)?,
        degenerate_orientation: degenerate,
    };
    Ok((transform, record))
}

/// Carry a canvas-domain residual back into the host frame (fill 0).
pub fn desynchronize_residual(
    residual: &Image,
    record: &SyncRecord,
    host_width: usize,
    host_height: usize,
) -> Result<Image> {
    warp(
        residual,
        &record.transform.inverse(),
        host_width,
        host_height,
        0.0,
    )
}
