//! Evaluation corpora: a seeded synthetic "desk" corpus of textured objects
//! on textured hosts, and a loader for name-matched image/mask directories.
//!
//! Desk objects are bars, ellipses, polygons and blobs covering 25–60% of a
//! 256×256 host. Every object is elongated (aspect ≥ 1.3) and has its
//! principal axis within ±35° of horizontal, so that after a ±45° attack the
//! axis never wraps past vertical. Objects never touch the host border.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::moments::compute_moments;
use crate::raster::{BinaryMask, Image};
use crate::seed;

pub const DESK_SIZE: usize = 256;
pub const DESK_BACKGROUND_SIZE: usize = 512;
pub const DESK_BACKGROUNDS: usize = 10;
pub const DEFAULT_DESK_COUNT: usize = 50;
pub const OCCUPANCY_RANGE: (f64, f64) = (0.25, 0.60);
const MAX_AXIS_ANGLE: f64 = 35.0 * PI / 180.0;
const MIN_ASPECT: f64 = 1.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Bar,
    Ellipse,
    Polygon,
    Blob,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [Self::Bar, Self::Ellipse, Self::Polygon, Self::Blob];
}

/// One host image with its object mask.
#[derive(Clone, Debug)]
pub struct CorpusItem {
    pub id: String,
    pub image: Image,
    pub mask: BinaryMask,
    /// `None` for items loaded from disk.
    pub shape: Option<ShapeKind>,
}

#[derive(Clone, Debug)]
pub struct Background {
    pub id: String,
    pub image: Image,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
    pub backgrounds: Vec<Background>,
}

/// Smooth random texture: a tilted base colour, a few plane waves per
/// channel and light pixel noise, quantized to 8 bits.
fn texture(
    rng: &mut ChaCha8Rng,
    w: usize,
    h: usize,
    waves: usize,
    amp: (f64, f64),
    base: (f64, f64),
) -> Image {
    struct Wave {
        a: f64,
        fx: f64,
        fy: f64,
        ph: f64,
    }
    let mut chans = Vec::with_capacity(3);
    for _ in 0..3 {
        let b = rng.gen_range(base.0..base.1);
        let gx = rng.gen_range(-0.2..0.2);
        let gy = rng.gen_range(-0.2..0.2);
        let ws: Vec<Wave> = (0..waves)
            .map(|_| {
                let f = rng.gen_range(1.0..12.0);
                let th = rng.gen_range(0.0..PI);
                Wave {
                    a: rng.gen_range(amp.0..amp.1),
                    fx: 2.0 * PI * f * th.cos(),
                    fy: 2.0 * PI * f * th.sin(),
                    ph: rng.gen_range(0.0..2.0 * PI),
                }
            })
            .collect();
        chans.push((b, gx, gy, ws));
    }
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let scale = w.max(h) as f64;
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / scale, y as f64 / scale);
            for (b, gx, gy, ws) in &chans {
                let mut val = b + gx * u + gy * v;
                for wv in ws {
                    val += wv.a * (wv.fx * u + wv.fy * v + wv.ph).sin();
                }
                data.push(val + noise.sample(rng));
            }
        }
    }
    Image::from_vec(w, h, data)
        .expect("dimensions positive")
        .clamped()
        .quantized()
}

/// Membership test in the shape's own frame, major axis along `x`, before
/// scaling. Shapes have unit-order size.
enum Outline {
    Rect {
        half_w: f64,
        half_h: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    Polygon {
        pts: Vec<(f64, f64)>,
    },
    Radial {
        aspect: f64,
        harmonics: Vec<(f64, f64, f64)>,
    },
}

impl Outline {
    fn random(kind: ShapeKind, aspect: f64, rng: &mut ChaCha8Rng) -> Self {
        match kind {
            ShapeKind::Bar => Self::Rect {
                half_w: aspect,
                half_h: 1.0,
            },
            ShapeKind::Ellipse => Self::Ellipse { a: aspect, b: 1.0 },
            ShapeKind::Polygon => {
                let k = rng.gen_range(5..=8);
                let mut angles: Vec<f64> = (0..k)
                    .map(|i| (i as f64 + rng.gen_range(-0.3..0.3)) * 2.0 * PI / k as f64)
                    .collect();
                angles.sort_by(f64::total_cmp);
                let pts = angles
                    .into_iter()
                    .map(|t| {
                        let r = rng.gen_range(0.8..1.2);
                        (aspect * r * t.cos(), r * t.sin())
                    })
                    .collect();
                Self::Polygon { pts }
            }
            ShapeKind::Blob => {
                let harmonics = (2..=5)
                    .map(|f| {
                        (
                            f as f64,
                            rng.gen_range(0.0..0.12),
                            rng.gen_range(0.0..2.0 * PI),
                        )
                    })
                    .collect();
                Self::Radial { aspect, harmonics }
            }
        }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Self::Rect { half_w, half_h } => u.abs() <= *half_w && v.abs() <= *half_h,
            Self::Ellipse { a, b } => (u / a).powi(2) + (v / b).powi(2) <= 1.0,
            Self::Polygon { pts } => {
                // even-odd ray casting
                let mut inside = false;
                let n = pts.len();
                for i in 0..n {
                    let (xi, yi) = pts[i];
                    let (xj, yj) = pts[(i + n - 1) % n];
                    if (yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                }
                inside
            }
            Self::Radial { aspect, harmonics } => {
                let (x, y) = (u / aspect, v);
                let t = y.atan2(x);
                let r: f64 = 1.0
                    + harmonics
                        .iter()
                        .map(|(f, a, p)| a * (f * t + p).cos())
                        .sum::<f64>();
                x.hypot(y) <= r
            }
        }
    }
}

fn rasterize(
    outline: &Outline,
    n: usize,
    center: (f64, f64),
    angle: f64,
    scale: f64,
) -> BinaryMask {
    let (s, c) = angle.sin_cos();
    BinaryMask::from_fn(n, n, |x, y| {
        let dx = x as f64 - center.0;
        let dy = y as f64 - center.1;
        // rotate the pixel back into the shape frame
        let u = (c * dx + s * dy) / scale;
        let v = (-s * dx + c * dy) / scale;
        outline.contains(u, v)
    })
    .expect("positive size")
}

/// Draw one object mask meeting the corpus constraints.
fn desk_mask(kind: ShapeKind, rng: &mut ChaCha8Rng) -> BinaryMask {
    let n = DESK_SIZE;
    let total = (n * n) as f64;
    let mut occupancy = rng.gen_range(OCCUPANCY_RANGE.0..OCCUPANCY_RANGE.1);
    loop {
        for _ in 0..200 {
            let aspect = rng.gen_range(MIN_ASPECT..2.0);
            let angle = rng.gen_range(-MAX_AXIS_ANGLE..MAX_AXIS_ANGLE);
            let center = (rng.gen_range(120.0..136.0), rng.gen_range(120.0..136.0));
            let outline = Outline::random(kind, aspect, rng);
            let mut scale = (occupancy * total / (4.0 * aspect)).sqrt();
            let mut mask = rasterize(&outline, n, center, angle, scale);
            for _ in 0..4 {
                let got = mask.count() as f64 / total;
                if got == 0.0 {
                    break;
                }
                scale *= (occupancy / got).sqrt();
                mask = rasterize(&outline, n, center, angle, scale);
            }
            let Some(bb) = mask.bbox() else { continue };
            let inside = bb.x_min >= 2 && bb.y_min >= 2 && bb.x_max + 3 <= n && bb.y_max + 3 <= n;
            let occ = mask.occupancy();
            let m = compute_moments(&mask).expect("non-empty");
            let phi = m.principal_orientation();
            if inside
                && (OCCUPANCY_RANGE.0..=OCCUPANCY_RANGE.1).contains(&occ)
                && phi.abs() <= MAX_AXIS_ANGLE
                && m.anisotropy() >= 0.02
            {
                return mask;
            }
        }
        // nothing fits at this size; settle for a smaller object
        occupancy = (occupancy - 0.02).max(OCCUPANCY_RANGE.0);
    }
}

/// The seeded synthetic corpus: `count` hosts and [`DESK_BACKGROUNDS`]
/// backgrounds. Items cycle through the four shape kinds.
pub fn desk_corpus(rng_seed: u64, count: usize) -> Result<Corpus> {
    if count == 0 {
        return Err(invalid("corpus count must be positive"));
    }
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = seed::rng(seed::derive(rng_seed, i as u64));
        let kind = ShapeKind::ALL[i % ShapeKind::ALL.len()];
        let mask = desk_mask(kind, &mut rng);
        let host = texture(&mut rng, DESK_SIZE, DESK_SIZE, 6, (0.01, 0.06), (0.2, 0.6));
        let object = texture(&mut rng, DESK_SIZE, DESK_SIZE, 8, (0.02, 0.08), (0.3, 0.8));
        let mut image = host;
        for (p, &inside) in mask.data().iter().enumerate() {
            if inside {
                image.data_mut()[3 * p..3 * p + 3]
                    .copy_from_slice(&object.data()[3 * p..3 * p + 3]);
            }
        }
        items.push(CorpusItem {
            id: format!("desk_{i:03}"),
            image,
            mask,
            shape: Some(kind),
        });
    }
    Ok(Corpus {
        items,
        backgrounds: desk_backgrounds(rng_seed),
    })
}

pub fn desk_backgrounds(rng_seed: u64) -> Vec<Background> {
    (0..DESK_BACKGROUNDS)
        .map(|j| {
            let mut rng = seed::rng(seed::derive(rng_seed ^ 0xB6_B6_B6, j as u64));
            Background {
                id: format!("bg_{j:03}"),
                image: texture(
                    &mut rng,
                    DESK_BACKGROUND_SIZE,
                    DESK_BACKGROUND_SIZE,
                    8,
                    (0.02, 0.08),
                    (0.2, 0.7),
                ),
            }
        })
        .collect()
}

/// Write `images/`, `masks/` and `backgrounds/` PNG directories.
pub fn save_corpus(corpus: &Corpus, out_dir: &Path) -> Result<()> {
    let dirs = ["images", "masks", "backgrounds"].map(|d| out_dir.join(d));
    for d in &dirs {
        fs::create_dir_all(d)?;
    }
    for item in &corpus.items {
        item.image.save(dirs[0].join(format!("{}.png", item.id)))?;
        item.mask.save(dirs[1].join(format!("{}.png", item.id)))?;
    }
    for bg in &corpus.backgrounds {
        bg.image.save(dirs[2].join(format!("{}.png", bg.id)))?;
    }
    Ok(())
}

fn image_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_resized(path: &Path, size: Option<u32>) -> Result<Image> {
    let mut img = image::open(path)?.to_rgb8();
    if let Some(s) = size {
        img = image::imageops::resize(&img, s, s, FilterType::Triangle);
    }
    let (w, h) = img.dimensions();
    Image::from_rgb8(w as usize, h as usize, img.as_raw())
}

fn load_mask_resized(path: &Path, size: Option<u32>) -> Result<BinaryMask> {
    let mut img = image::open(path)?.to_luma8();
    if let Some(s) = size {
        img = image::imageops::resize(&img, s, s, FilterType::Nearest);
    }
    let (w, h) = img.dimensions();
    BinaryMask::from_vec(
        w as usize,
        h as usize,
        img.as_raw().iter().map(|&v| v >= 128).collect(),
    )
}

/// Load a corpus laid out as an image directory and a mask directory whose
/// files are matched by stem (`a.jpg` ↔ `a.png`). Images without a mask are
/// skipped. `resize` squashes every image and mask to `resize × resize`.
/// Without a background directory the synthetic desk backgrounds are used.
pub fn load_corpus_dir(
    images: &Path,
    masks: &Path,
    backgrounds: Option<&Path>,
    resize: Option<u32>,
) -> Result<Corpus> {
    let mask_files = image_files(masks)?;
    let mut items = Vec::new();
    for (stem, path) in image_files(images)? {
        let Some((_, mpath)) = mask_files.iter().find(|(s, _)| *s == stem) else {
            continue;
        };
        let image = load_resized(&path, resize)?;
        let mask = load_mask_resized(mpath, resize)?;
        if image.dims() != mask.dims() {
            return Err(invalid(format!("image and mask for {stem} differ in size")));
        }
        items.push(CorpusItem {
            id: stem,
            image,
            mask,
            shape: None,
        });
    }
    if items.is_empty() {
        return Err(invalid(format!(
            "no name-matched image/mask pairs in {} and {}",
            images.display(),
            masks.display()
        )));
    }
    let backgrounds = match backgrounds {
        Some(dir) => image_files(dir)?
            .into_iter()
            .map(|(id, p)| {
                Ok(Background {
                    id,
                    image: Image::load(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => desk_backgrounds(0),
    };
    if backgrounds.is_empty() {
        return Err(invalid("background directory holds no images"));
    }
    Ok(Corpus { items, backgrounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::min_bounding_square;

    #[test]
    fn desk_items_meet_constraints() {
        let c = desk_corpus(9, 8).unwrap();
        assert_eq!(c.items.len(), 8);
        assert_eq!(c.backgrounds.len(), DESK_BACKGROUNDS);
        for (i, item) in c.items.iter().enumerate() {
            assert_eq!(item.shape, Some(ShapeKind::ALL[i % 4]));
            let occ = item.mask.occupancy();
            assert!((0.25..=0.60).contains(&occ), "{} occupancy {occ}", item.id);
            let m = compute_moments(&item.mask).unwrap();
            assert!(m.principal_orientation().abs() <= MAX_AXIS_ANGLE);
            assert!(min_bounding_square(&item.mask).unwrap().side >= 64);
            assert!(item.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn desk_is_deterministic() {
        let a = desk_corpus(4, 3).unwrap();
        let b = desk_corpus(4, 3).unwrap();
        for (x, y) in a.items.iter().zip(&b.items) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.mask, y.mask);
        }
        let c = desk_corpus(5, 1).unwrap();
        assert_ne!(a.items[0].mask, c.items[0].mask);
    }

    #[test]
    fn save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let c = desk_corpus(1, 2).unwrap();
        save_corpus(&c, dir.path()).unwrap();
        let back = load_corpus_dir(
            &dir.path().join("images"),
            &dir.path().join("masks"),
            Some(&dir.path().join("backgrounds")),
            None,
        )
        .unwrap();
        assert_eq!(back.items.len(), 2);
        assert_eq!(back.items[1].id, "desk_001");
        assert_eq!(back.items[1].image, c.items[1].image);
        assert_eq!(back.items[1].mask, c.items[1].mask);
        assert_eq!(back.backgrounds.len(), DESK_BACKGROUNDS);

        let small = load_corpus_dir(
            &dir.path().join("images"),
            &dir.path().join("masks"),
            None,
            Some(64),
        )
        .unwrap();
        assert_eq!(small.items[0].image.dims(), (64, 64));
        assert_eq!(small.items[0].mask.dims(), (64, 64));
    }
}
