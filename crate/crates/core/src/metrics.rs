//! Image quality and decoding metrics.

use crate::attacks::gaussian_kernel;
use crate::codec::MessageBits;
use crate::error::{invalid, Result};
use crate::raster::{check_same_dims, BinaryMask, Image};

/// Returned by [`psnr`] for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio in dB over all channels of the included pixels,
/// with a peak of 1.0. With a mask only object pixels count.
pub fn psnr(a: &Image, b: &Image, mask: Option<&BinaryMask>) -> Result<f64> {
    check_same_dims(a.dims(), b.dims())?;
    if let Some(m) = mask {
        check_same_dims(a.dims(), m.dims())?;
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for (i, (pa, pb)) in a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .enumerate()
    {
        if mask.is_some_and(|m| !m.data()[i]) {
            continue;
        }
        for c in 0..3 {
            let d = pa[c] - pb[c];
            sse += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return Err(invalid("psnr mask selects no pixels"));
    }
    let mse = sse / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Separable "valid" filtering of a `w × h` plane with a symmetric kernel.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                s += kv * rows[(y + j) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    (out, ow, oh)
}

/// Mean structural similarity of the luminance planes (11×11 Gaussian
/// window, σ = 1.5) over all window positions fully inside the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w.min(h) < SSIM_WINDOW {
        return Err(invalid(format!(
            "ssim needs both dimensions ≥ {SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let kernel = gaussian_kernel(SSIM_SIGMA);
    debug_assert_eq!(kernel.len(), SSIM_WINDOW);
    let la = a.luminance();
    let lb = b.luminance();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let (mu_a, ow, oh) = filter_valid(&la, w, h, &kernel);
    let (mu_b, ..) = filter_valid(&lb, w, h, &kernel);
    let (e_aa, ..) = filter_valid(&prod(&la, &la), w, h, &kernel);
    let (e_bb, ..) = filter_valid(&prod(&lb, &lb), w, h, &kernel);
    let (e_ab, ..) = filter_valid(&prod(&la, &lb), w, h, &kernel);

    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
    }
    Ok(total / (ow * oh) as f64)
}

/// Bit accuracy rate: fraction of positions where the two messages agree.
pub fn bar(decoded: &MessageBits, truth: &MessageBits) -> Result<f64> {
    if decoded.len() != truth.len() {
        return Err(invalid(format!(
            "message lengths differ: {} vs {}",
            decoded.len(),
            truth.len()
        )));
    }
    let same = decoded
        .bits()
        .iter()
        .zip(truth.bits())
        .filter(|(a, b)| a == b)
        .count();
    Ok(same as f64 / truth.len() as f64)
}

/// Intersection over union; two empty masks count as a perfect match.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_same_dims(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::from_u8;
    use crate::seed;
    use rand_distr::{Distribution, Normal};

    fn test_pattern(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = 0.5 + 0.3 * ((x as f64 * 0.4).sin() * (y as f64 * 0.25).cos());
            [v, 1.0 - v, 0.5 + 0.2 * (x as f64 * 0.1).cos()]
        })
        .unwrap()
    }

    fn noisy(base: &Image, sd: f64, s: u64) -> Image {
        let mut rng = seed::rng(s);
        let n = Normal::new(0.0, sd).unwrap();
        base.map(|v| v + n.sample(&mut rng)).clamped()
    }

    #[test]
    fn psnr_cap_and_single_level() {
        let a = test_pattern(20, 20);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP);
        let p = Image::filled(1, 1, [from_u8(255); 3]).unwrap();
        let q = Image::filled(1, 1, [from_u8(254); 3]).unwrap();
        let expected = 20.0 * 255f64.log10();
        assert!((psnr(&p, &q, None).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 48.13).abs() < 0.01);
    }

    #[test]
    fn masked_psnr_matches_when_difference_is_inside() {
        let a = test_pattern(30, 20);
        let m = BinaryMask::from_fn(30, 20, |x, y| (5..15).contains(&x) && (4..12).contains(&y))
            .unwrap();
        let mut b = a.clone();
        b.set_pixel(7, 6, [0.0, 0.0, 0.0]);
        let whole = psnr(&a, &b, None).unwrap();
        let masked = psnr(&a, &b, Some(&m)).unwrap();
        // same squared error, fewer samples: exactly 10·log10(N_all / N_mask) apart
        let shift = 10.0 * (600.0f64 / 80.0).log10();
        assert!((whole - masked - shift).abs() < 1e-9);
        assert!(psnr(&a, &b, Some(&BinaryMask::new(30, 20).unwrap())).is_err());
    }

    #[test]
    fn dims_checked() {
        let a = test_pattern(12, 12);
        let b = test_pattern(12, 13);
        assert!(psnr(&a, &b, None).is_err());
        assert!(ssim(&a, &b).is_err());
        assert!(ssim(&test_pattern(10, 40), &test_pattern(10, 40)).is_err());
    }

    #[test]
    fn ssim_identity_negative_and_noise_order() {
        let a = test_pattern(48, 40);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let neg = a.map(|v| 1.0 - v);
        let s = ssim(&a, &neg).unwrap();
        assert!(s < 0.2, "negative ssim {s}");
        let small = ssim(&a, &noisy(&a, 0.01, 1)).unwrap();
        let large = ssim(&a, &noisy(&a, 0.05, 1)).unwrap();
        assert!(large < small && small < 1.0);
    }

    #[test]
    fn bar_examples() {
        let t = MessageBits::from_bit_string(&"01".repeat(15)).unwrap();
        assert_eq!(bar(&t, &t).unwrap(), 1.0);
        let comp = MessageBits::new(t.bits().iter().map(|b| !b).collect()).unwrap();
        assert_eq!(bar(&comp, &t).unwrap(), 0.0);
        let mut three = t.bits().to_vec();
        for i in [0, 10, 29] {
            three[i] = !three[i];
        }
        assert!((bar(&MessageBits::new(three).unwrap(), &t).unwrap() - 0.9).abs() < 1e-12);
        let short = MessageBits::from_bit_string("0101").unwrap();
        assert!(bar(&short, &t).is_err());
    }

    #[test]
    fn iou_examples() {
        let r = |x0: usize, x1: usize| {
            BinaryMask::from_fn(20, 10, |x, y| (x0..x1).contains(&x) && y < 5).unwrap()
        };
        assert_eq!(iou(&r(0, 10), &r(0, 10)).unwrap(), 1.0);
        assert_eq!(iou(&r(0, 5), &r(10, 15)).unwrap(), 0.0);
        assert!((iou(&r(0, 10), &r(5, 15)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let e = BinaryMask::new(20, 10).unwrap();
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert!(iou(&e, &BinaryMask::new(10, 10).unwrap()).is_err());
    }
}
