//! Region moments of a binary mask and the invariant features built on them:
//! centroid, principal orientation and the minimum bounding square.
//!
//! Moments are summed over every object pixel of the raster (region moments),
//! not integrated along a contour. For filled shapes the two agree up to
//! rasterization error. A mask with several connected components is treated
//! as one object; filtering components is left to whoever produces the mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Default threshold on normalized second-moment anisotropy below which the
/// principal orientation is considered undefined.
pub const DEFAULT_DEGENERACY_EPS: f64 = 1e-3;

/// Raw moments up to first order and central moments of second order.
///
/// Only constructed from non-empty masks, so `m00 > 0` always holds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSet {
    m00: f64,
    m10: f64,
    m01: f64,
    mu11: f64,
    mu20: f64,
    mu02: f64,
}

impl MomentSet {
    pub fn m00(&self) -> f64 {
        self.m00
    }
    pub fn m10(&self) -> f64 {
        self.m10
    }
    pub fn m01(&self) -> f64 {
        self.m01
    }
    pub fn mu11(&self) -> f64 {
        self.mu11
    }
    pub fn mu20(&self) -> f64 {
        self.mu20
    }
    pub fn mu02(&self) -> f64 {
        self.mu02
    }

    /// Center of mass `(m10 / m00, m01 / m00)`.
    pub fn centroid(&self) -> (f64, f64) {
        (self.m10 / self.m00, self.m01 / self.m00)
    }

    /// Angle of the major axis in `(-π/2, π/2]`:
    /// `0.5 · atan2(2·mu11 / mu00, (mu20 − mu02) / mu00)` with `mu00 = m00`.
    pub fn principal_orientation(&self) -> f64 {
        let mu00 = self.m00;
        // `+ 0.0` folds a negative zero so that atan2(0, negative) yields +π
        let num = 2.0 * self.mu11 / mu00 + 0.0;
        let den = (self.mu20 - self.mu02) / mu00;
        let phi = 0.5 * num.atan2(den);
        if phi <= -std::f64::consts::FRAC_PI_2 {
            phi + std::f64::consts::PI
        } else {
            phi
        }
    }

    /// Second-moment anisotropy normalized by `m00²`; scale invariant.
    pub fn anisotropy(&self) -> f64 {
        (2.0 * self.mu11).hypot(self.mu20 - self.mu02) / (self.m00 * self.m00)
    }

    pub fn is_orientation_degenerate(&self, eps: f64) -> bool {
        self.anisotropy() < eps
    }
}

/// Moments of all object pixels.
pub fn compute_moments(mask: &BinaryMask) -> Result<MomentSet> {
    let mut count: u64 = 0;
    let mut sx: u64 = 0;
    let mut sy: u64 = 0;
    for (x, y) in mask.iter_true() {
        count += 1;
        sx += x as u64;
        sy += y as u64;
    }
    if count == 0 {
        return Err(Error::EmptyRegion("mask has no object pixels".into()));
    }
    let m00 = count as f64;
    let m10 = sx as f64;
    let m01 = sy as f64;
    let (cx, cy) = (m10 / m00, m01 / m00);

    let (mut mu11, mut mu20, mut mu02) = (0.0, 0.0, 0.0);
    for (x, y) in mask.iter_true() {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        mu11 += dx * dy;
        mu20 += dx * dx;
        mu02 += dy * dy;
    }
    Ok(MomentSet {
        m00,
        m10,
        m01,
        mu11,
        mu20,
        mu02,
    })
}

pub fn centroid(m: &MomentSet) -> (f64, f64) {
    m.centroid()
}

pub fn principal_orientation(m: &MomentSet) -> f64 {
    m.principal_orientation()
}

pub fn is_orientation_degenerate(m: &MomentSet, eps: f64) -> bool {
    m.is_orientation_degenerate(eps)
}

/// Axis-aligned square obtained by padding the tight bounding rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquareRect {
    pub x0: i64,
    pub y0: i64,
    pub side: usize,
}

/// Pads the shorter side of the bounding rectangle symmetrically; an odd
/// leftover pixel goes to the right or bottom.
pub fn min_bounding_square(mask: &BinaryMask) -> Result<SquareRect> {
    let bb = mask
        .bbox()
        .ok_or_else(|| Error::EmptyRegion("mask has no object pixels".into()))?;
    let (w, h) = (bb.width(), bb.height());
    let side = w.max(h);
    Ok(SquareRect {
        x0: bb.x_min as i64 - ((side - w) / 2) as i64,
        y0: bb.y_min as i64 - ((side - h) / 2) as i64,
        side,
    })
}
