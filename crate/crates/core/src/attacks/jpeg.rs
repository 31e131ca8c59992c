//! Baseline JPEG quantization round trip: JFIF colour conversion, 4:2:0
//! chroma subsampling, 8×8 DCT, quantization with the Annex K tables scaled
//! by quality, and the inverse path back to 8-bit RGB. Entropy coding is
//! lossless and therefore skipped.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::raster::{to_u8, Image};

#[rustfmt::skip]
const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[rustfmt::skip]
const CHROMA_TABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Quality-scaled table with the conventional linear scaling
/// (`5000 / q` below 50, `200 − 2q` from 50 up), entries clamped to 1..=255.
pub fn scaled_table(base: &[u16; 64], quality: u8) -> [u16; 64] {
    let q = u32::from(quality.clamp(1, 100));
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

fn cos_table() -> &'static [[f64; 8]; 8] {
    static T: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    T.get_or_init(|| {
        let mut t = [[0.0; 8]; 8];
        for (x, row) in t.iter_mut().enumerate() {
            for (u, v) in row.iter_mut().enumerate() {
                *v = ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        t
    })
}

fn alpha(u: usize) -> f64 {
    if u == 0 {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        1.0
    }
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let c = cos_table();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += block[y * 8 + x] * c[x][u];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += tmp[y * 8 + u] * c[y][v];
            }
            out[v * 8 + u] = 0.25 * alpha(u) * alpha(v) * s;
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let c = cos_table();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += alpha(u) * coef[v * 8 + u] * c[x][u];
            }
            tmp[v * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += alpha(v) * tmp[v * 8 + x] * c[y][v];
            }
            out[y * 8 + x] = 0.25 * s;
        }
    }
    out
}

/// Quantize and reconstruct one plane of 8-bit-range samples in place.
fn code_plane(plane: &mut [f64], w: usize, h: usize, table: &[u16; 64]) {
    let bw = w.div_ceil(8);
    let bh = h.div_ceil(8);
    let mut block = [0.0; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for y in 0..8 {
                let sy = (by * 8 + y).min(h - 1);
                for x in 0..8 {
                    let sx = (bx * 8 + x).min(w - 1);
                    block[y * 8 + x] = plane[sy * w + sx] - 128.0;
                }
            }
            let mut coef = fdct(&block);
            for (c, &q) in coef.iter_mut().zip(table) {
                let q = f64::from(q);
                *c = (*c / q).round() * q;
            }
            let rec = idct(&coef);
            for y in 0..8 {
                let sy = by * 8 + y;
                if sy >= h {
                    break;
                }
                for x in 0..8 {
                    let sx = bx * 8 + x;
                    if sx >= w {
                        break;
                    }
                    plane[sy * w + sx] = (rec[y * 8 + x] + 128.0).round().clamp(0.0, 255.0);
                }
            }
        }
    }
}

/// Compress and decompress `img` at `quality` (1..=100).
pub fn jpeg_round_trip(img: &Image, quality: u8) -> Image {
    let (w, h) = img.dims();
    let rgb = img.to_rgb8();
    let n = w * h;
    let mut y_plane = vec![0.0; n];
    let mut cb_full = vec![0.0; n];
    let mut cr_full = vec![0.0; n];
    for i in 0..n {
        let r = f64::from(rgb[3 * i]);
        let g = f64::from(rgb[3 * i + 1]);
        let b = f64::from(rgb[3 * i + 2]);
        y_plane[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        cb_full[i] = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
        cr_full[i] = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
    }
    for v in y_plane.iter_mut() {
        *v = v.round().clamp(0.0, 255.0);
    }

    // 4:2:0 by 2×2 box averaging, edge pixels replicated
    let cw = w.div_ceil(2);
    let ch = h.div_ceil(2);
    let subsample = |full: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; cw * ch];
        for cy in 0..ch {
            for cx in 0..cw {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let x = (2 * cx + dx).min(w - 1);
                        let y = (2 * cy + dy).min(h - 1);
                        s += full[y * w + x];
                    }
                }
                out[cy * cw + cx] = (s / 4.0).round().clamp(0.0, 255.0);
            }
        }
        out
    };
    let mut cb = subsample(&cb_full);
    let mut cr = subsample(&cr_full);

    code_plane(&mut y_plane, w, h, &scaled_table(&LUMA_TABLE, quality));
    let ctable = scaled_table(&CHROMA_TABLE, quality);
    code_plane(&mut cb, cw, ch, &ctable);
    code_plane(&mut cr, cw, ch, &ctable);

    let mut data = Vec::with_capacity(n * 3);
    for y in 0..h {
        for x in 0..w {
            let yy = y_plane[y * w + x];
            let ci = (y / 2) * cw + x / 2;
            let b = cb[ci] - 128.0;
            let r = cr[ci] - 128.0;
            let px = [
                yy + 1.402 * r,
                yy - 0.344_136 * b - 0.714_136 * r,
                yy + 1.772 * b,
            ];
            for v in px {
                data.push(f64::from(to_u8(v / 255.0)) / 255.0);
            }
        }
    }
    Image::from_vec(w, h, data).expect("dimensions unchanged")
}
