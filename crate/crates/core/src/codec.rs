//! Keyed block spread-spectrum codec working on the synchronized canvas.
//!
//! The canvas is tiled into `block_size`² blocks. A keyed permutation deals
//! the blocks round-robin to the message bits, and each block gets a keyed
//! sign. Every block carries the same smooth zero-mean profile (a separable
//! half-period cosine "saddle") multiplied by its sign, by the bit polarity
//! and by the strength α. The profile is orthogonal to any plane inside the
//! block, so slowly varying host content barely leaks into the correlation.
//!
//! Decoding removes each block's masked mean and estimates the profile
//! amplitude of every block by least squares. Host texture that survives the
//! profile's orthogonality is smooth across neighbouring blocks whereas the
//! keyed signs are not, so a linear predictor fitted over the block grid
//! removes most of it before the signed amplitudes are summed per bit.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::{BinaryMask, Image};
use crate::seed;
use crate::ssync::{desynchronize_residual, synchronize_with, SyncObject, SyncOptions, SyncRecord};

pub const DEFAULT_BLOCK_SIZE: usize = 8;
pub const DEFAULT_STRENGTH: f64 = 6.0 / 255.0;
pub const DEFAULT_MESSAGE_LEN: usize = 30;
/// Blocks whose masked luminance deviation has RMS below 1e-4 (far under
/// one 8-bit level) are treated as flat.
const MIN_BLOCK_ENERGY: f64 = 1e-8;
/// Neighbourhood half-width, in blocks, of the host predictor.
const PREDICTOR_RADIUS: usize = 2;
/// The predictor is only fitted with at least this many blocks per coefficient.
const MIN_FIT_ROWS_PER_COEF: usize = 4;
/// Below this mean confidence the decoder also tries the half-turned canvas.
pub const FLIP_CONFIDENCE_THRESHOLD: f64 = 0.1;

/// Parse a 64-bit key written in hex, with or without a `0x` prefix.
pub fn parse_key(s: &str) -> Result<u64> {
    let digits = s.strip_prefix("0x").unwrap_or(s);
    if digits.is_empty() || digits.len() > 16 {
        return Err(invalid(format!(
            "key must be 1 to 16 hex digits, got {s:?}"
        )));
    }
    u64::from_str_radix(digits, 16).map_err(|_| invalid(format!("key {s:?} is not hexadecimal")))
}

/// A non-empty bit string.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MessageBits(Vec<bool>);

impl MessageBits {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(invalid("message must contain at least one bit"));
        }
        Ok(Self(bits))
    }

    /// Parse `"0110…"`.
    pub fn from_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(invalid(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .and_then(Self::new)
    }

    /// Four bits per hex digit, most significant first. An optional `0x`
    /// prefix is accepted.
    pub fn from_hex(s: &str) -> Result<Self> {
        let digits = s.strip_prefix("0x").unwrap_or(s);
        let mut bits = Vec::with_capacity(digits.len() * 4);
        for c in digits.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| invalid(format!("invalid hex digit {c:?}")))?;
            bits.extend((0..4).rev().map(|k| (v >> k) & 1 == 1));
        }
        Self::new(bits)
    }

    /// Message given on the command line: `0x`-prefixed hex, otherwise a bit
    /// string.
    pub fn parse(s: &str) -> Result<Self> {
        if s.starts_with("0x") {
            Self::from_hex(s)
        } else {
            Self::from_bit_string(s)
        }
    }

    pub fn random(len: usize, rng_seed: u64) -> Result<Self> {
        let mut rng = seed::rng(rng_seed);
        Self::new((0..len).map(|_| rng.gen::<bool>()).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for MessageBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

impl TryFrom<String> for MessageBits {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::from_bit_string(&s)
    }
}

impl From<MessageBits> for String {
    fn from(m: MessageBits) -> String {
        m.to_bit_string()
    }
}

/// Everything the embedder and extractor share besides the image.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedPlan {
    key: u64,
    n: usize,
    block_size: usize,
    length: usize,
    strength: f64,
    /// Bit index carried by each block, blocks in row-major order.
    assignment: Vec<usize>,
    /// Keyed ±1 per block.
    signs: Vec<i8>,
    /// Zero-mean unit-peak profile shared by all blocks, row-major.
    profile: Vec<f64>,
}

/// Separable cosine saddle with peak 1 and RMS 1/2.
fn saddle_profile(b: usize) -> Vec<f64> {
    let f: Vec<f64> = (0..b)
        .map(|i| (PI * (i as f64 + 0.5) / b as f64).cos())
        .collect();
    let mut p = Vec::with_capacity(b * b);
    for fy in &f {
        for fx in &f {
            p.push(fy * fx);
        }
    }
    p
}

/// Build the keyed plan for an `n × n` canvas carrying `length` bits.
pub fn make_plan(key: u64, n: usize, block_size: usize, length: usize) -> Result<EmbedPlan> {
    if block_size < 2 {
        return Err(invalid(format!(
            "block size must be at least 2, got {block_size}"
        )));
    }
    if n == 0 || !n.is_multiple_of(block_size) {
        return Err(invalid(format!(
            "canvas size {n} is not a positive multiple of block size {block_size}"
        )));
    }
    if length == 0 {
        return Err(invalid("message length must be at least 1"));
    }
    let per_side = n / block_size;
    let blocks = per_side * per_side;
    if length > blocks {
        return Err(Error::CapacityExceeded {
            bits: length,
            blocks,
        });
    }

    let plan_seed = [n as u64, block_size as u64, length as u64]
        .into_iter()
        .fold(key, seed::derive);
    let mut rng = seed::rng(plan_seed);
    let mut order: Vec<usize> = (0..blocks).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0; blocks];
    for (rank, &block) in order.iter().enumerate() {
        assignment[block] = rank % length;
    }
    let signs = (0..blocks)
        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
        .collect();

    Ok(EmbedPlan {
        key,
        n,
        block_size,
        length,
        strength: DEFAULT_STRENGTH,
        assignment,
        signs,
        profile: saddle_profile(block_size),
    })
}

impl EmbedPlan {
    pub fn with_strength(mut self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("strength must lie in [0, 1], got {alpha}")));
        }
        self.strength = alpha;
        Ok(self)
    }

    pub fn key(&self) -> u64 {
        self.key
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn block_size(&self) -> usize {
        self.block_size
    }
    pub fn length(&self) -> usize {
        self.length
    }
    pub fn strength(&self) -> f64 {
        self.strength
    }
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
    pub fn block_count(&self) -> usize {
        self.assignment.len()
    }

    /// Chip pattern of block `i`: its sign times the shared profile.
    pub fn chip(&self, i: usize) -> Vec<f64> {
        let s = f64::from(self.signs[i]);
        self.profile.iter().map(|p| s * p).collect()
    }

    /// Blocks of an `n × n` canvas with at least half their pixels inside `mask`.
    fn usable_blocks<'a>(&'a self, mask: &'a [bool]) -> impl Iterator<Item = usize> + 'a {
        let b = self.block_size;
        let per_side = self.n / b;
        (0..self.block_count()).filter(move |&i| {
            let (bx, by) = (i % per_side, i / per_side);
            let mut inside = 0;
            for y in by * b..(by + 1) * b {
                inside += mask[y * self.n + bx * b..y * self.n + (bx + 1) * b]
                    .iter()
                    .filter(|&&m| m)
                    .count();
            }
            2 * inside >= b * b
        })
    }

    /// Number of usable blocks per bit for an `n × n` mask.
    pub fn coverage(&self, mask: &BinaryMask) -> Result<Vec<usize>> {
        if mask.dims() != (self.n, self.n) {
            return Err(invalid(format!("mask must be {0}x{0}", self.n)));
        }
        let mut cover = vec![0; self.length];
        for i in self.usable_blocks(mask.data()) {
            cover[self.assignment[i]] += 1;
        }
        Ok(cover)
    }
}

/// Output of [`embed`].
#[derive(Clone, Debug)]
pub struct Embedded {
    pub watermarked: SyncObject,
    /// Already multiplied by the mask.
    pub residual: Image,
    /// PSNR between the watermarked and original canvas over the mask.
    pub masked_psnr: f64,
}

fn check_canvas(obj: &SyncObject, plan: &EmbedPlan) -> Result<()> {
    if obj.size() != plan.n {
        return Err(invalid(format!(
            "canvas is {0}x{0} but the plan expects {1}x{1}",
            obj.size(),
            plan.n
        )));
    }
    Ok(())
}

/// Add the keyed residual to the luminance of the object pixels.
pub fn embed(obj: &SyncObject, msg: &MessageBits, plan: &EmbedPlan) -> Result<Embedded> {
    check_canvas(obj, plan)?;
    if msg.len() != plan.length {
        return Err(invalid(format!(
            "message has {} bits but the plan carries {}",
            msg.len(),
            plan.length
        )));
    }
    let n = plan.n;
    let b = plan.block_size;
    let per_side = n / b;
    let mask = obj.mask().data();
    let mut residual = Image::new(n, n)?;
    if plan.strength > 0.0 {
        let r = residual.data_mut();
        for y in 0..n {
            for x in 0..n {
                let p = y * n + x;
                if !mask[p] {
                    continue;
                }
                let block = (y / b) * per_side + x / b;
                let polarity = if msg.bits()[plan.assignment[block]] {
                    1.0
                } else {
                    -1.0
                };
                let v = plan.strength
                    * f64::from(plan.signs[block])
                    * polarity
                    * plan.profile[(y % b) * b + x % b];
                r[3 * p..3 * p + 3].fill(v);
            }
        }
    }
    let mut canvas = obj.canvas().clone();
    if plan.strength > 0.0 {
        for (c, r) in canvas.data_mut().iter_mut().zip(residual.data()) {
            *c = (*c + r).clamp(0.0, 1.0);
        }
    }
    let masked_psnr = crate::metrics::psnr(&canvas, obj.canvas(), Some(obj.mask()))?;
    Ok(Embedded {
        watermarked: SyncObject::new(canvas, obj.mask().clone())?,
        residual,
        masked_psnr,
    })
}

/// Result of [`extract`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub bits: MessageBits,
    /// Magnitude of the summed signed block amplitudes per bit, divided by the
    /// number of contributing blocks. Amplitudes are in units of the plan
    /// strength, so a clean read is close to 1.
    pub per_bit_confidence: Vec<f64>,
    /// Blocks whose amplitudes entered the vote.
    pub used_blocks: usize,
    pub rotated_180: bool,
}

impl DecodeReport {
    pub fn mean_confidence(&self) -> f64 {
        self.per_bit_confidence.iter().sum::<f64>() / self.per_bit_confidence.len() as f64
    }
}

/// Least-squares chip amplitude of block `i`, in units of the plan strength,
/// after removing the masked block mean. `None` marks a flat block.
fn block_amplitude(lum: &[f64], mask: &[bool], plan: &EmbedPlan, i: usize) -> Option<f64> {
    let (n, b) = (plan.n, plan.block_size);
    let per_side = n / b;
    let (bx, by) = (i % per_side, i / per_side);
    let pixels = || {
        (0..b * b).filter_map(move |k| {
            let p = (by * b + k / b) * n + bx * b + k % b;
            mask[p].then_some((lum[p], plan.profile[k]))
        })
    };
    let (sum, m) = pixels().fold((0.0, 0usize), |(s, m), (v, _)| (s + v, m + 1));
    let mean = sum / m as f64;
    let (mut dot, mut yy, mut pp) = (0.0, 0.0, 0.0);
    for (v, q) in pixels() {
        let y = v - mean;
        dot += y * q;
        yy += y * y;
        pp += q * q;
    }
    let unit = if plan.strength > 0.0 {
        plan.strength
    } else {
        DEFAULT_STRENGTH
    };
    (yy > MIN_BLOCK_ENERGY * m as f64 && pp > 0.0).then(|| dot / pp / unit)
}

/// Host content is spatially smooth across blocks while the keyed signs are
/// independent, so the part of each block amplitude that its neighbours
/// predict is host interference. Fits one linear predictor over all blocks
/// whose full neighbourhood is usable and returns the prediction errors of
/// those blocks; `None` if there are too few of them for a stable fit.
fn prediction_errors(amp: &[Option<f64>], per_side: usize) -> Option<Vec<Option<f64>>> {
    let r = PREDICTOR_RADIUS as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&o| o != (0, 0))
        .collect();
    let side = per_side as isize;
    let at = |x: isize, y: isize| {
        if (0..side).contains(&x) && (0..side).contains(&y) {
            amp[(y * side + x) as usize]
        } else {
            None
        }
    };
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut index = Vec::new();
    for (i, a) in amp.iter().enumerate() {
        let Some(z) = *a else { continue };
        let (x, y) = ((i % per_side) as isize, (i / per_side) as isize);
        let neighbours: Option<Vec<f64>> =
            offsets.iter().map(|&(dx, dy)| at(x + dx, y + dy)).collect();
        if let Some(nb) = neighbours {
            rows.extend(nb);
            targets.push(z);
            index.push(i);
        }
    }
    let k = offsets.len();
    if targets.len() < MIN_FIT_ROWS_PER_COEF * k {
        return None;
    }
    let a = DMatrix::from_row_slice(targets.len(), k, &rows);
    let t = DVector::from_vec(targets);
    let mut normal = a.transpose() * &a;
    // a touch of ridge keeps the solve well posed on very regular hosts
    let ridge = 1e-9 * normal.trace() / k as f64 + f64::MIN_POSITIVE;
    for d in 0..k {
        normal[(d, d)] += ridge;
    }
    let coef = normal.cholesky()?.solve(&(a.transpose() * &t));
    let residual = t - a * coef;
    let mut out = vec![None; amp.len()];
    for (&i, &e) in index.iter().zip(residual.iter()) {
        out[i] = Some(e);
    }
    Some(out)
}

/// Decode one orientation of the canvas. `lum` and `mask` are row-major
/// `n × n` planes.
fn decode_planes(lum: &[f64], mask: &[bool], plan: &EmbedPlan) -> Result<DecodeReport> {
    let per_side = plan.n / plan.block_size;
    let mut amp = vec![None; per_side * per_side];
    let mut usable = 0;
    for i in plan.usable_blocks(mask) {
        usable += 1;
        // flat blocks still count as neighbours, with zero amplitude
        amp[i] = Some(block_amplitude(lum, mask, plan, i).unwrap_or(0.0));
    }
    if usable == 0 {
        return Err(Error::NoSignal("no block has enough mask coverage".into()));
    }
    if amp.iter().all(|a| a.is_none_or(|z| z == 0.0)) {
        return Err(Error::NoSignal(
            "object region carries no luminance variation".into(),
        ));
    }
    let errors = prediction_errors(&amp, per_side);
    let vote = |source: &[Option<f64>]| {
        let mut acc = vec![0.0; plan.length];
        let mut count = vec![0usize; plan.length];
        for (i, v) in source.iter().enumerate() {
            if let Some(v) = v {
                acc[plan.assignment[i]] += f64::from(plan.signs[i]) * v;
                count[plan.assignment[i]] += 1;
            }
        }
        (acc, count)
    };
    let (mut acc, mut count) = vote(errors.as_deref().unwrap_or(&amp));
    if errors.is_some() && count.contains(&0) {
        // bits with no interior block fall back to their raw amplitudes
        let (raw_acc, raw_count) = vote(&amp);
        for bit in 0..plan.length {
            if count[bit] == 0 {
                acc[bit] = raw_acc[bit];
                count[bit] = raw_count[bit];
            }
        }
    }
    Ok(DecodeReport {
        bits: MessageBits::new(acc.iter().map(|&a| a > 0.0).collect())?,
        per_bit_confidence: acc
            .iter()
            .zip(&count)
            .map(|(a, &c)| if c == 0 { 0.0 } else { a.abs() / c as f64 })
            .collect(),
        used_blocks: count.iter().sum(),
        rotated_180: false,
    })
}

/// Blind extraction from a synchronized object. With `degenerate_orientation`
/// set, or when the straight decode is weak, the half-turned canvas is
/// decoded as well and the more confident reading wins.
pub fn extract(
    obj: &SyncObject,
    plan: &EmbedPlan,
    degenerate_orientation: bool,
) -> Result<DecodeReport> {
    check_canvas(obj, plan)?;
    let lum = obj.canvas().luminance();
    let mask = obj.mask().data();
    let straight = decode_planes(&lum, mask, plan);
    let weak = match &straight {
        Ok(r) => r.mean_confidence() < FLIP_CONFIDENCE_THRESHOLD,
        Err(_) => true,
    };
    if !(degenerate_orientation || weak) {
        return straight;
    }
    // a half turn about the canvas centre reverses the row-major pixel order
    let lum_r: Vec<f64> = lum.iter().rev().copied().collect();
    let mask_r: Vec<bool> = mask.iter().rev().copied().collect();
    match (straight, decode_planes(&lum_r, &mask_r, plan)) {
        (Ok(s), Ok(mut f)) => {
            if f.mean_confidence() > s.mean_confidence() {
                f.rotated_180 = true;
                Ok(f)
            } else {
                Ok(s)
            }
        }
        (Ok(s), Err(_)) => Ok(s),
        (Err(_), Ok(mut f)) => {
            f.rotated_180 = true;
            Ok(f)
        }
        (Err(e), Err(_)) => Err(e),
    }
}

/// Watermark `host` in its own geometry: synchronize, embed on the canvas,
/// carry the residual back and add it inside `mask`. Also returns the sync
/// record of the host object.
pub fn embed_into_host_with(
    host: &Image,
    mask: &BinaryMask,
    msg: &MessageBits,
    plan: &EmbedPlan,
    opts: &SyncOptions,
) -> Result<(Image, SyncRecord)> {
    if opts.n != plan.n {
        return Err(invalid(format!(
            "sync canvas {} does not match plan canvas {}",
            opts.n, plan.n
        )));
    }
    let (obj, record) = synchronize_with(host, mask, opts)?;
    let embedded = embed(&obj, msg, plan)?;
    if plan.strength == 0.0 {
        return Ok((host.clone(), record));
    }
    let (w, h) = host.dims();
    let back = desynchronize_residual(&embedded.residual, &record, w, h)?;
    let mut out = host.clone();
    for (i, &inside) in mask.data().iter().enumerate() {
        if inside {
            for c in 3 * i..3 * i + 3 {
                out.data_mut()[c] = (out.data()[c] + back.data()[c]).clamp(0.0, 1.0);
            }
        }
    }
    Ok((out, record))
}

pub fn embed_into_host(
    host: &Image,
    mask: &BinaryMask,
    msg: &MessageBits,
    plan: &EmbedPlan,
    n: usize,
) -> Result<Image> {
    embed_into_host_with(host, mask, msg, plan, &SyncOptions::with_n(n)).map(|(img, _)| img)
}

/// Synchronize a suspect image with `mask` and extract.
pub fn decode(
    image: &Image,
    mask: &BinaryMask,
    plan: &EmbedPlan,
    opts: &SyncOptions,
) -> Result<DecodeReport> {
    let (obj, record) = synchronize_with(image, mask, opts)?;
    extract(&obj, plan, record.degenerate_orientation)
}
