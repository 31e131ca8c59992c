//! Image and mask containers, the similarity transform, and bilinear warping.
//!
//! Coordinates follow the raster convention: `x` is the column index, `y`
//! the row index, the origin is the top-left pixel and pixel centers sit on
//! integer coordinates. A rotation by a positive angle is counterclockwise in
//! the mathematical `(x, y)` plane; because `y` grows downward this appears
//! clockwise on screen. Every module uses this one convention.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Convert a processing-domain intensity to 8 bits (clamp, then round half up).
#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[inline]
pub fn from_u8(v: u8) -> f64 {
    f64::from(v) / 255.0
}

/// An RGB raster with real-valued intensities in `[0, 1]`, stored interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    /// A black image.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Wrap an interleaved RGB buffer. Values are used as given.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(invalid(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        check_dims(width, height)?;
        if bytes.len() != width * height * 3 {
            return Err(invalid(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: bytes.iter().copied().map(from_u8).collect(),
        })
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().copied().map(to_u8).collect()
    }

    /// Round-trip through 8 bits, as happens whenever an image is written to disk.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| from_u8(to_u8(v))).collect(),
        }
    }

    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma plane, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect()
    }

    /// Per-sample map, keeping dimensions.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Multiply every pixel by the matching mask value (0 or 1).
    pub fn masked(&self, mask: &BinaryMask) -> Result<Self> {
        check_same_dims(self.dims(), mask.dims())?;
        let mut out = self.clone();
        for (px, &keep) in out.data.chunks_exact_mut(3).zip(mask.data()) {
            if !keep {
                px.fill(0.0);
            }
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(w as usize, h as usize, img.as_raw())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .expect("buffer length matches dimensions");
        buf.save(path)?;
        Ok(())
    }
}

/// Per-pixel object membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

/// Inclusive, axis-aligned pixel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![false; width * height],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(invalid(format!(
                "expected {} mask entries for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Fraction of the frame covered by the mask.
    pub fn occupancy(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut bb: Option<BBox> = None;
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            let Some(first) = row.iter().position(|&v| v) else {
                continue;
            };
            let last = row.iter().rposition(|&v| v).unwrap_or(first);
            bb = Some(match bb {
                None => BBox {
                    x_min: first,
                    y_min: y,
                    x_max: last,
                    y_max: y,
                },
                Some(b) => BBox {
                    x_min: b.x_min.min(first),
                    y_min: b.y_min,
                    x_max: b.x_max.max(last),
                    y_max: y,
                },
            });
        }
        bb
    }

    /// Iterate the coordinates of object pixels in row-major order.
    pub fn iter_true(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// The mask as a grey image with values 0 or 1 in every channel.
    pub fn to_image(&self) -> Image {
        let data = self
            .data
            .iter()
            .flat_map(|&v| {
                let f = if v { 1.0 } else { 0.0 };
                [f, f, f]
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Loads a grayscale (or colour, converted to luma) PNG; values ≥ 128 are object.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Self::from_vec(
            w as usize,
            h as usize,
            img.as_raw().iter().map(|&v| v >= 128).collect(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions");
        buf.save(path)?;
        Ok(())
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(invalid(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

pub(crate) fn check_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(invalid(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// 2×3 affine map `p' = [[a, b], [c, d]] p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Affine {
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a * x + self.b * y + self.tx,
            self.c * x + self.d * y + self.ty,
        )
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &Affine) -> Affine {
        Affine {
            a: next.a * self.a + next.b * self.c,
            b: next.a * self.b + next.b * self.d,
            c: next.c * self.a + next.d * self.c,
            d: next.c * self.b + next.d * self.d,
            tx: next.a * self.tx + next.b * self.ty + next.tx,
            ty: next.c * self.tx + next.d * self.ty + next.ty,
        }
    }
}

/// Rotation and uniform scaling about `pivot`, followed by a translation:
/// `p' = pivot + scale · R(rotation) · (p − pivot) + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub translation: (f64, f64),
    /// Radians.
    pub rotation: f64,
    pub scale: f64,
    pub pivot: (f64, f64),
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            translation: (0.0, 0.0),
            rotation: 0.0,
            scale: 1.0,
            pivot: (0.0, 0.0),
        }
    }

    pub fn new(
        translation: (f64, f64),
        rotation: f64,
        scale: f64,
        pivot: (f64, f64),
    ) -> Result<Self> {
        let t = Self {
            translation,
            rotation,
            scale,
            pivot,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn translate(dx: f64, dy: f64) -> Self {
        Self {
            translation: (dx, dy),
            ..Self::identity()
        }
    }

    /// Rotation by `angle` radians about `pivot`.
    pub fn rotate_about(angle: f64, pivot: (f64, f64)) -> Self {
        Self {
            rotation: angle,
            pivot,
            ..Self::identity()
        }
    }

    pub fn scale_about(scale: f64, pivot: (f64, f64)) -> Self {
        Self {
            scale,
            pivot,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.translation.0,
            self.translation.1,
            self.rotation,
            self.scale,
            self.pivot.0,
            self.pivot.1,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("transform has non-finite components"));
        }
        if self.scale <= 0.0 {
            return Err(invalid(format!(
                "transform scale must be > 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn to_affine(&self) -> Affine {
        let (sin, cos) = self.rotation.sin_cos();
        let a = self.scale * cos;
        let b = -self.scale * sin;
        let c = self.scale * sin;
        let d = self.scale * cos;
        let (px, py) = self.pivot;
        Affine {
            a,
            b,
            c,
            d,
            tx: px + self.translation.0 - (a * px + b * py),
            ty: py + self.translation.1 - (c * px + d * py),
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        self.to_affine().apply(x, y)
    }

    pub fn inverse(&self) -> Self {
        Self {
            translation: (-self.translation.0, -self.translation.1),
            rotation: -self.rotation,
            scale: 1.0 / self.scale,
            pivot: (
                self.pivot.0 + self.translation.0,
                self.pivot.1 + self.translation.1,
            ),
        }
    }

    /// The transform that applies `self` first and then `next`. The result is
    /// expressed about the origin.
    pub fn then(&self, next: &SimilarityTransform) -> Self {
        let m = self.to_affine().then(&next.to_affine());
        Self {
            translation: (m.tx, m.ty),
            rotation: m.c.atan2(m.a),
            scale: m.a.hypot(m.c),
            pivot: (0.0, 0.0),
        }
    }
}

/// Four bilinear taps: source pixel index (None when outside the frame) and weight.
type Taps = [(Option<usize>, f64); 4];

/// Visit every output pixel with the bilinear taps of its inverse-mapped
/// source location. Returns `None` taps when all four neighbours are outside.
fn for_each_taps(
    src_w: usize,
    src_h: usize,
    transform: &SimilarityTransform,
    out_w: usize,
    out_h: usize,
    mut visit: impl FnMut(usize, Option<&Taps>),
) {
    let inv = transform.inverse().to_affine();
    let (w, h) = (src_w as i64, src_h as i64);
    let idx = |x: i64, y: i64| -> Option<usize> {
        (x >= 0 && y >= 0 && x < w && y < h).then(|| (y * w + x) as usize)
    };
    for oy in 0..out_h {
        for ox in 0..out_w {
            let (sx, sy) = inv.apply(ox as f64, oy as f64);
            let out = oy * out_w + ox;
            let x0 = sx.floor();
            let y0 = sy.floor();
            if !(x0 >= -1.0 && y0 >= -1.0 && x0 < w as f64 && y0 < h as f64) {
                visit(out, None);
                continue;
            }
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let taps = [
                (idx(x0, y0), (1.0 - fx) * (1.0 - fy)),
                (idx(x0 + 1, y0), fx * (1.0 - fy)),
                (idx(x0, y0 + 1), (1.0 - fx) * fy),
                (idx(x0 + 1, y0 + 1), fx * fy),
            ];
            visit(out, Some(&taps));
        }
    }
}

/// Resample `src` through `transform` (source frame → output frame) with
/// bilinear interpolation. Neighbours outside the source read as `fill`.
pub fn warp(
    src: &Image,
    transform: &SimilarityTransform,
    out_width: usize,
    out_height: usize,
    fill: f64,
) -> Result<Image> {
    check_dims(out_width, out_height)?;
    transform.validate()?;
    let mut data = vec![fill; out_width * out_height * 3];
    let sd = &src.data;
    for_each_taps(
        src.width,
        src.height,
        transform,
        out_width,
        out_height,
        |out, taps| {
            let Some(taps) = taps else { return };
            for c in 0..3 {
                let mut v = 0.0;
                for &(i, wgt) in taps {
                    v += wgt * i.map_or(fill, |i| sd[i * 3 + c]);
                }
                data[out * 3 + c] = v;
            }
        },
    );
    Ok(Image {
        width: out_width,
        height: out_height,
        data,
    })
}

/// Warp a mask as a 0/1 image with fill 0 and threshold the coverage at 0.5.
pub fn warp_mask(
    src: &BinaryMask,
    transform: &SimilarityTransform,
    out_width: usize,
    out_height: usize,
) -> Result<BinaryMask> {
    check_dims(out_width, out_height)?;
    transform.validate()?;
    let mut data = vec![false; out_width * out_height];
    let sd = &src.data;
    for_each_taps(
        src.width,
        src.height,
        transform,
        out_width,
        out_height,
        |out, taps| {
            let Some(taps) = taps else { return };
            let mut v = 0.0;
            for &(i, wgt) in taps {
                v += wgt * i.map_or(0.0, |i| if sd[i] { 1.0 } else { 0.0 });
            }
            data[out] = v >= 0.5;
        },
    );
    Ok(BinaryMask {
        width: out_width,
        height: out_height,
        data,
    })
}
