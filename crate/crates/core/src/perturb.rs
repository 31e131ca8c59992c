//! Controlled mask corruption standing in for segmentation error.

use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::raster::BinaryMask;
use crate::seed;

pub const MAX_PERTURB_ITERATIONS: usize = 50;
pub const IOU_TOLERANCE: f64 = 0.02;

/// A perturbed mask together with how close it got to the requested IoU.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbed {
    pub mask: BinaryMask,
    pub achieved_iou: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Degrade `mask` until its IoU against the original drops to `target_iou`.
///
/// Steps alternate between growing and shrinking the region. Each step
/// visits the current 4-connected boundary in random order and flips about
/// half of it, only touching pixels whose flip moves away from the original
/// (new pixels outside it, removed pixels inside it). The walk stops as soon
/// as the IoU reaches the target, so convergence is normally within one pixel
/// of the target; tiny masks may overshoot, which shows up in
/// `achieved_iou` and `converged`.
pub fn perturb_mask(mask: &BinaryMask, target_iou: f64, rng_seed: u64) -> Result<Perturbed> {
    if !(target_iou > 0.5 && target_iou <= 1.0) {
        return Err(invalid(format!(
            "target IoU must lie in (0.5, 1], got {target_iou}"
        )));
    }
    if mask.is_empty() {
        return Err(Error::EmptyRegion("cannot perturb an empty mask".into()));
    }
    let (w, h) = mask.dims();
    let orig = mask.data();
    let mut cur = orig.to_vec();
    let mut inter = mask.count();
    let mut union = inter;
    let mut rng = seed::rng(rng_seed);
    let iou = |i: usize, u: usize| i as f64 / u as f64;

    let mut iterations = 0;
    while iou(inter, union) > target_iou && iterations < MAX_PERTURB_ITERATIONS {
        let grow = iterations % 2 == 0;
        iterations += 1;
        let mut candidates: Vec<usize> = (0..w * h)
            .filter(|&p| {
                // growing adds outside pixels, shrinking removes inside ones
                if cur[p] == grow || orig[p] == grow {
                    return false;
                }
                let (x, y) = (p % w, p / w);
                let mut nb = [None; 4];
                if x > 0 {
                    nb[0] = Some(p - 1);
                }
                if x + 1 < w {
                    nb[1] = Some(p + 1);
                }
                if y > 0 {
                    nb[2] = Some(p - w);
                }
                if y + 1 < h {
                    nb[3] = Some(p + w);
                }
                nb.iter().flatten().any(|&q| cur[q] == grow)
            })
            .collect();
        candidates.shuffle(&mut rng);
        let take = candidates.len().div_ceil(2);
        for &p in &candidates[..take] {
            cur[p] = grow;
            if grow {
                union += 1;
            } else {
                inter -= 1;
            }
            if iou(inter, union) <= target_iou {
                break;
            }
        }
    }
    let achieved = iou(inter, union);
    Ok(Perturbed {
        mask: BinaryMask::from_vec(w, h, cur)?,
        achieved_iou: achieved,
        iterations,
        converged: (achieved - target_iou).abs() <= IOU_TOLERANCE,
    })
}
