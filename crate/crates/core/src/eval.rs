//! Corpus evaluation: watermark every host, attack it, re-synchronize with the
//! ground-truth or a perturbed mask, decode, and tabulate the metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    crop_paste, distort, evaluation_bank, jpeg_sweep, sample_attack, AttackRanges, AttackSpec,
    DistortionSpec,
};
use crate::codec::{
    decode, embed_into_host, make_plan, MessageBits, DEFAULT_BLOCK_SIZE, DEFAULT_MESSAGE_LEN,
    DEFAULT_STRENGTH,
};
use crate::corpus::{desk_corpus, load_corpus_dir, Corpus, CorpusItem, DEFAULT_DESK_COUNT};
use crate::error::{invalid, Result};
use crate::metrics::{bar, iou, psnr, ssim};
use crate::perturb::perturb_mask;
use crate::raster::{BinaryMask, Image};
use crate::seed;
use crate::ssync::{SyncAblation, SyncOptions, DEFAULT_CANVAS};

/// Embedding-stage PSNR above which SSIM is expected to exceed
/// [`SANITY_SSIM`]. Records that break the implication are flagged.
pub const SANITY_PSNR: f64 = 38.0;
pub const SANITY_SSIM: f64 = 0.95;
/// Full synchronization in the ablation numbering.
pub const FULL_ABLATION_ID: u8 = 6;

/// Where the images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorpusSource {
    Desk {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_count")]
        count: usize,
    },
    Directory {
        images: PathBuf,
        masks: PathBuf,
        #[serde(default)]
        backgrounds: Option<PathBuf>,
        #[serde(default)]
        resize: Option<u32>,
    },
}

fn default_count() -> usize {
    DEFAULT_DESK_COUNT
}

impl Default for CorpusSource {
    fn default() -> Self {
        Self::Desk {
            seed: 0,
            count: DEFAULT_DESK_COUNT,
        }
    }
}

impl CorpusSource {
    pub fn load(&self) -> Result<Corpus> {
        match self {
            Self::Desk { seed, count } => desk_corpus(*seed, *count),
            Self::Directory {
                images,
                masks,
                backgrounds,
                resize,
            } => load_corpus_dir(images, masks, backgrounds.as_deref(), *resize),
        }
    }
}

/// A named distortion list or an explicit one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistortionBank {
    Preset(BankPreset),
    List(Vec<DistortionSpec>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankPreset {
    /// The ten single distortions, identity included.
    Standard,
    JpegSweep,
}

impl Default for DistortionBank {
    fn default() -> Self {
        Self::List(Vec::new())
    }
}

impl DistortionBank {
    /// The distortions to run; an empty list means the identity only.
    pub fn specs(&self) -> Vec<DistortionSpec> {
        match self {
            Self::Preset(BankPreset::Standard) => evaluation_bank(),
            Self::Preset(BankPreset::JpegSweep) => jpeg_sweep(),
            Self::List(v) if v.is_empty() => vec![DistortionSpec::none()],
            Self::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MaskSource {
    #[default]
    Gt,
    Perturbed {
        target_iou: f64,
    },
}

mod hex_key {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(key: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{key:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        crate::codec::parse_key(&s).map_err(de::Error::custom)
    }
}

/// A complete, reproducible evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub corpus: CorpusSource,
    pub n: usize,
    pub message_length: usize,
    #[serde(with = "hex_key")]
    pub key: u64,
    pub alpha: f64,
    pub block_size: usize,
    /// `None` skips the cropping-paste step and decodes the watermarked host
    /// directly.
    pub attack: Option<AttackRanges>,
    pub attacks_per_image: usize,
    pub distortions: DistortionBank,
    /// Adds one row per image and attack with a distortion drawn uniformly
    /// from the bank.
    pub combined: bool,
    pub mask_source: MaskSource,
    /// Ablation row 1–6 (6 = full synchronization).
    pub ablation_id: u8,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSource::default(),
            n: DEFAULT_CANVAS,
            message_length: DEFAULT_MESSAGE_LEN,
            key: 0x005e_ed0b_1ec7_0001,
            alpha: DEFAULT_STRENGTH,
            block_size: DEFAULT_BLOCK_SIZE,
            attack: Some(AttackRanges::default()),
            attacks_per_image: 1,
            distortions: DistortionBank::default(),
            combined: false,
            mask_source: MaskSource::Gt,
            ablation_id: FULL_ABLATION_ID,
            seed: 0,
            output: None,
        }
    }
}

impl EvalConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = &self.attack {
            r.validate()?;
        }
        if self.attacks_per_image == 0 {
            return Err(invalid("attacks_per_image must be at least 1"));
        }
        if SyncAblation::from_row(self.ablation_id).is_none() {
            return Err(invalid(format!(
                "ablation id must be 1–6, got {}",
                self.ablation_id
            )));
        }
        if let MaskSource::Perturbed { target_iou } = self.mask_source {
            if !(target_iou > 0.5 && target_iou <= 1.0) {
                return Err(invalid(format!(
                    "target IoU must lie in (0.5, 1], got {target_iou}"
                )));
            }
        }
        if let CorpusSource::Directory {
            images,
            masks,
            backgrounds,
            ..
        } = &self.corpus
        {
            for p in [Some(images), Some(masks), backgrounds.as_ref()]
                .into_iter()
                .flatten()
            {
                if !p.is_dir() {
                    return Err(invalid(format!(
                        "corpus directory {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        for d in self.distortions.specs() {
            d.validate()?;
        }
        make_plan(self.key, self.n, self.block_size, self.message_length)?
            .with_strength(self.alpha)?;
        Ok(())
    }

    fn sync_options(&self) -> SyncOptions {
        SyncOptions {
            n: self.n,
            ablation: SyncAblation::from_row(self.ablation_id).expect("validated"),
            ..SyncOptions::default()
        }
    }
}

/// One evaluated (image, attack, distortion) triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image_id: String,
    pub attack: String,
    pub distortion: String,
    pub bar: f64,
    /// Watermarked host vs original host.
    pub psnr: f64,
    pub ssim: f64,
    /// Mask used for decoding vs the true mask in the attacked frame.
    pub mask_iou: f64,
    pub decode_confidence: f64,
    pub ablation_id: u8,
    /// Empty on success. Decode failures keep chance-level BAR; embed or
    /// placement failures leave the metrics NaN.
    pub error: String,
    /// Object area over image area of the host.
    pub occupancy: f64,
    /// Message bits per object pixel of the host.
    pub bpp: f64,
    /// Embedding-stage PSNR ≥ floor but SSIM below the expected level.
    pub sanity_violation: bool,
    #[serde(skip)]
    attack_index: usize,
}

impl ResultRecord {
    /// Whether the record enters aggregates.
    pub fn is_scored(&self) -> bool {
        !self.bar.is_nan()
    }
}

fn error_record(
    item: &CorpusItem,
    cfg: &EvalConfig,
    attack: String,
    distortion: String,
    msg: String,
    k: usize,
) -> ResultRecord {
    ResultRecord {
        image_id: item.id.clone(),
        attack,
        distortion,
        bar: f64::NAN,
        psnr: f64::NAN,
        ssim: f64::NAN,
        mask_iou: f64::NAN,
        decode_confidence: f64::NAN,
        ablation_id: cfg.ablation_id,
        error: msg,
        occupancy: item.mask.occupancy(),
        bpp: cfg.message_length as f64 / item.mask.count().max(1) as f64,
        sanity_violation: false,
        attack_index: k,
    }
}

struct Prepared {
    watermarked: Image,
    message: MessageBits,
    psnr: f64,
    ssim: f64,
}

fn prepare(item: &CorpusItem, idx: usize, cfg: &EvalConfig) -> Result<Prepared> {
    let plan =
        make_plan(cfg.key, cfg.n, cfg.block_size, cfg.message_length)?.with_strength(cfg.alpha)?;
    let message = MessageBits::random(cfg.message_length, seed::derive(cfg.seed, 2 * idx as u64))?;
    let watermarked = embed_into_host(&item.image, &item.mask, &message, &plan, cfg.n)?.quantized();
    Ok(Prepared {
        psnr: psnr(&watermarked, &item.image, None)?,
        ssim: ssim(&watermarked, &item.image)?,
        watermarked,
        message,
    })
}

fn evaluate_item(
    item: &CorpusItem,
    idx: usize,
    corpus: &Corpus,
    cfg: &EvalConfig,
    out: &mut Vec<ResultRecord>,
) -> Result<()> {
    let plan =
        make_plan(cfg.key, cfg.n, cfg.block_size, cfg.message_length)?.with_strength(cfg.alpha)?;
    let opts = cfg.sync_options();
    let bank = cfg.distortions.specs();
    let item_seed = seed::derive(cfg.seed, 2 * idx as u64 + 1);

    let prepared = prepare(item, idx, cfg);
    for k in 0..cfg.attacks_per_image {
        let attack_seed = seed::derive(item_seed, k as u64);
        let mut rows: Vec<(String, DistortionSpec)> =
            bank.iter().map(|d| (d.label(), *d)).collect();
        if cfg.combined {
            let mut rng = seed::rng(seed::derive(attack_seed, u64::MAX));
            let d = bank[rng.gen_range(0..bank.len())];
            rows.push((format!("combined({})", d.label()), d));
        }
        let p = match &prepared {
            Ok(p) => p,
            Err(e) => {
                for (label, _) in rows {
                    out.push(error_record(
                        item,
                        cfg,
                        "none".into(),
                        label,
                        format!("embed: {e}"),
                        k,
                    ));
                }
                continue;
            }
        };

        // geometric attack
        let placed: Result<(Image, BinaryMask, String)> = match &cfg.attack {
            None => Ok((p.watermarked.clone(), item.mask.clone(), "none".into())),
            Some(ranges) => {
                let bg_index =
                    (seed::mix64(attack_seed) % corpus.backgrounds.len() as u64) as usize;
                let bg = &corpus.backgrounds[bg_index];
                sample_attack(attack_seed, &item.mask, bg.image.dims(), ranges).and_then(|spec| {
                    let spec = AttackSpec {
                        background_id: bg.id.clone(),
                        ..spec
                    };
                    let (img, gt) = crop_paste(&p.watermarked, &item.mask, &bg.image, &spec)?;
                    Ok((
                        img,
                        gt,
                        format!("{};{}", spec.background_id, spec.describe()),
                    ))
                })
            }
        };
        let (composite, gt, attack_label) = match placed {
            Ok(v) => v,
            Err(e) => {
                for (label, _) in rows {
                    out.push(error_record(
                        item,
                        cfg,
                        "infeasible".into(),
                        label,
                        format!("attack: {e}"),
                        k,
                    ));
                }
                continue;
            }
        };

        // decoding mask, shared by all distortions of this attack
        let (mask, mask_iou) = match cfg.mask_source {
            MaskSource::Gt => (gt.clone(), 1.0),
            MaskSource::Perturbed { target_iou } => {
                let pm = perturb_mask(&gt, target_iou, seed::derive(attack_seed, 0x3a5c))?;
                let achieved = iou(&pm.mask, &gt)?;
                (pm.mask, achieved)
            }
        };

        for (j, (label, d)) in rows.into_iter().enumerate() {
            let mut rec = error_record(item, cfg, attack_label.clone(), label, String::new(), k);
            rec.psnr = p.psnr;
            rec.ssim = p.ssim;
            rec.mask_iou = mask_iou;
            rec.sanity_violation = p.psnr >= SANITY_PSNR && p.ssim < SANITY_SSIM;
            let attacked =
                distort(&composite, &d, seed::derive(attack_seed, 100 + j as u64))?.quantized();
            match decode(&attacked, &mask, &plan, &opts) {
                Ok(report) => {
                    rec.bar = bar(&report.bits, &p.message)?;
                    rec.decode_confidence = report.mean_confidence();
                }
                Err(e) => {
                    rec.bar = 0.5;
                    rec.decode_confidence = 0.0;
                    rec.error = format!("decode: {e}");
                }
            }
            out.push(rec);
        }
    }
    Ok(())
}

/// Run the configured evaluation over an already loaded corpus. Records come
/// back sorted by image id, then distortion label, then attack index.
pub fn run_eval_on(corpus: &Corpus, cfg: &EvalConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let mut items: Vec<&CorpusItem> = corpus.items.iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let mut records = Vec::new();
    for (idx, item) in items.into_iter().enumerate() {
        evaluate_item(item, idx, corpus, cfg, &mut records)?;
    }
    records.sort_by(|a, b| {
        (&a.image_id, &a.distortion, a.attack_index).cmp(&(
            &b.image_id,
            &b.distortion,
            b.attack_index,
        ))
    });
    Ok(records)
}

/// Load the corpus, evaluate, and write the CSV files when `output` is set.
pub fn run_eval(cfg: &EvalConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let corpus = cfg.corpus.load()?;
    let records = run_eval_on(&corpus, cfg)?;
    if let Some(path) = &cfg.output {
        write_results(&records, path)?;
    }
    Ok(records)
}

/// Mean metrics over the scored records of one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub count: usize,
    pub bar: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub mask_iou: f64,
    pub decode_confidence: f64,
    pub bpp: f64,
}

fn aggregate<'a>(label: String, recs: impl IntoIterator<Item = &'a ResultRecord>) -> Aggregate {
    let scored: Vec<&ResultRecord> = recs.into_iter().filter(|r| r.is_scored()).collect();
    let count = scored.len();
    let mean = |f: fn(&ResultRecord) -> f64| {
        if count == 0 {
            f64::NAN
        } else {
            scored.iter().map(|r| f(r)).sum::<f64>() / count as f64
        }
    };
    Aggregate {
        label,
        count,
        bar: mean(|r| r.bar),
        psnr: mean(|r| r.psnr),
        ssim: mean(|r| r.ssim),
        mask_iou: mean(|r| r.mask_iou),
        decode_confidence: mean(|r| r.decode_confidence),
        bpp: mean(|r| r.bpp),
    }
}

/// Per-distortion means (in first-seen label order after sorting) followed by
/// the overall mean labelled `all`.
pub fn aggregate_by_distortion(records: &[ResultRecord]) -> Vec<Aggregate> {
    let mut labels: Vec<&str> = records.iter().map(|r| r.distortion.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut out: Vec<Aggregate> = labels
        .iter()
        .map(|l| {
            aggregate(
                (*l).to_string(),
                records.iter().filter(|r| r.distortion == *l),
            )
        })
        .collect();
    out.push(aggregate("all".into(), records));
    out
}

pub const OCCUPANCY_BUCKETS: [(f64, f64); 4] =
    [(0.25, 0.30), (0.30, 0.40), (0.40, 0.50), (0.50, 0.60)];

/// Means per occupancy bucket. The last bucket is closed on the right.
pub fn aggregate_by_occupancy(records: &[ResultRecord]) -> Vec<Aggregate> {
    OCCUPANCY_BUCKETS
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let last = i + 1 == OCCUPANCY_BUCKETS.len();
            let label = format!("{:.0}-{:.0}%", lo * 100.0, hi * 100.0);
            aggregate(
                label,
                records.iter().filter(|r| {
                    r.occupancy >= lo && (r.occupancy < hi || (last && r.occupancy <= hi))
                }),
            )
        })
        .collect()
}

fn f4(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.4}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str =
    "image_id,attack,distortion,bar,psnr,ssim,mask_iou,decode_confidence,ablation_id,error";

/// Records followed by one `mean` row per distortion and an overall row.
pub fn results_csv(records: &[ResultRecord]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.image_id),
            csv_field(&r.attack),
            csv_field(&r.distortion),
            f4(r.bar),
            f4(r.psnr),
            f4(r.ssim),
            f4(r.mask_iou),
            f4(r.decode_confidence),
            r.ablation_id,
            csv_field(&r.error),
        );
    }
    let ablation = records
        .first()
        .map(|r| r.ablation_id.to_string())
        .unwrap_or_default();
    for a in aggregate_by_distortion(records) {
        let _ = writeln!(
            s,
            "mean,all,{},{},{},{},{},{},{},",
            csv_field(&a.label),
            f4(a.bar),
            f4(a.psnr),
            f4(a.ssim),
            f4(a.mask_iou),
            f4(a.decode_confidence),
            ablation
        );
    }
    s
}

/// Occupancy bucket table: bucket, count, BAR, PSNR, bits per object pixel.
pub fn occupancy_csv(records: &[ResultRecord]) -> String {
    let mut s = String::from("occupancy,count,bar,psnr,bpp\n");
    for a in aggregate_by_occupancy(records) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            a.label,
            a.count,
            f4(a.bar),
            f4(a.psnr),
            f4(a.bpp)
        );
    }
    s
}

/// Path of the occupancy table that accompanies `results`.
pub fn occupancy_path(results: &Path) -> PathBuf {
    let stem = results
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    results.with_file_name(format!("{stem}_occupancy.csv"))
}

pub fn write_results(records: &[ResultRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, results_csv(records))?;
    std::fs::write(occupancy_path(path), occupancy_csv(records))?;
    Ok(())
}
