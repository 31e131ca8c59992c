//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary
//! (`harness = false`) so the report is always printed; exits non-zero if
//! any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use objmark::attacks::{crop_paste, sample_attack, AttackRanges, DistortionKind};
use objmark::corpus::{desk_corpus, Corpus};
use objmark::eval::{
    aggregate_by_distortion, results_csv, run_eval_on, BankPreset, CorpusSource, DistortionBank,
    EvalConfig, MaskSource, ResultRecord,
};
use objmark::metrics::{iou, psnr, ssim};
use objmark::moments::compute_moments;
use objmark::seed;
use objmark::ssync::{synchronize, SyncAblation, SyncObject};
use objmark::{codec, BinaryMask, SimilarityTransform};
use rand::Rng;

const CORPUS_SEED: u64 = 2024;
const CORPUS_COUNT: usize = 50;
const EVAL_SEED: u64 = 17;

fn corpus() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| desk_corpus(CORPUS_SEED, CORPUS_COUNT).expect("desk corpus"))
}

fn base_config() -> EvalConfig {
    EvalConfig {
        corpus: CorpusSource::Desk {
            seed: CORPUS_SEED,
            count: CORPUS_COUNT,
        },
        seed: EVAL_SEED,
        ..EvalConfig::default()
    }
}

/// Records of the default RST run, shared by several criteria.
fn rst_run() -> &'static [ResultRecord] {
    static R: OnceLock<Vec<ResultRecord>> = OnceLock::new();
    R.get_or_init(|| run_eval_on(corpus(), &base_config()).expect("eval"))
}

fn mean_bar(recs: &[ResultRecord]) -> f64 {
    let scored: Vec<f64> = recs
        .iter()
        .filter(|r| r.is_scored())
        .map(|r| r.bar)
        .collect();
    scored.iter().sum::<f64>() / scored.len() as f64
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, start: Instant, mut o: Outcome) -> Outcome {
    let t = start.elapsed();
    if t > limit {
        o.pass = false;
        o.detail = format!(
            "{}; runtime {:.1}s exceeds {:.0}s",
            o.detail,
            t.as_secs_f64(),
            limit.as_secs_f64()
        );
    } else {
        o.detail = format!("{}; {:.1}s", o.detail, t.as_secs_f64());
    }
    o
}

/// Random masks of random size up to 64×64 mixing sparse noise, rectangles
/// and discs.
fn random_mask(rng: &mut impl Rng) -> BinaryMask {
    let w = rng.gen_range(1..=64);
    let h = rng.gen_range(1..=64);
    let kind = rng.gen_range(0..3);
    let density: f64 = rng.gen_range(0.05..0.95);
    let (cx, cy) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
    let r = rng.gen_range(1.0..40.0);
    let mut m = BinaryMask::from_fn(w, h, |x, y| match kind {
        0 => false,
        1 => (x as f64 - cx).abs() < r * 0.7 && (y as f64 - cy).abs() < r * 0.4,
        _ => (x as f64 - cx).hypot(y as f64 - cy) < r,
    })
    .unwrap();
    for y in 0..h {
        for x in 0..w {
            if rng.gen_bool(density * 0.3) {
                m.set(x, y, !m.get(x, y));
            }
        }
    }
    if m.is_empty() {
        m.set(rng.gen_range(0..w), rng.gen_range(0..h), true);
    }
    m
}

fn ac1_moment_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(1);
    let mut worst_rel: f64 = 0.0;
    for i in 0..200 {
        let m = random_mask(&mut rng);
        let got = compute_moments(&m).unwrap();
        let (w, h) = m.dims();
        // brute-force double loop, two passes, row-major
        let (mut n, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                if m.get(x, y) {
                    n += 1.0;
                    sx += x as f64;
                    sy += y as f64;
                }
            }
        }
        let (cx, cy) = (sx / n, sy / n);
        let (mut m11, mut m20, mut m02) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                if m.get(x, y) {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    m11 += dx * dy;
                    m20 += dx * dx;
                    m02 += dy * dy;
                }
            }
        }
        let oracle = [n, sx, sy, m11, m20, m02];
        let ours = [
            got.m00(),
            got.m10(),
            got.m01(),
            got.mu11(),
            got.mu20(),
            got.mu02(),
        ];
        if oracle != ours {
            return outcome(false, format!("mask {i}: oracle {oracle:?} vs {ours:?}"));
        }
        // exact integer cross-check: m00·mu_pq = m00·Σ(xy) − Σx·Σy
        let (mut ix, mut iy, mut ixx, mut iyy, mut ixy, mut cnt) =
            (0i128, 0i128, 0i128, 0i128, 0i128, 0i128);
        for (x, y) in m.iter_true() {
            let (x, y) = (x as i128, y as i128);
            cnt += 1;
            ix += x;
            iy += y;
            ixx += x * x;
            iyy += y * y;
            ixy += x * y;
        }
        for (num, val) in [
            (cnt * ixy - ix * iy, got.mu11()),
            (cnt * ixx - ix * ix, got.mu20()),
            (cnt * iyy - iy * iy, got.mu02()),
        ] {
            let exact = num as f64 / cnt as f64;
            let rel = (exact - val).abs() / exact.abs().max(1.0);
            worst_rel = worst_rel.max(rel);
        }
    }
    within(
        Duration::from_secs(5),
        start,
        outcome(worst_rel < 1e-9, format!("200 masks bit-identical to the oracle; max rel. deviation from exact rationals {worst_rel:.1e}")),
    )
}

fn wrap_half_turn(a: f64) -> f64 {
    let mut d = a.rem_euclid(PI);
    if d > FRAC_PI_2 {
        d -= PI;
    }
    d
}

fn ac2_equivariance() -> Outcome {
    let start = Instant::now();
    // Majors span 64 to 136 px. Below about 64 px the worst case is set by
    // binary rasterization rather than by the moments (0.02 to 0.03 rad at 32 px).
    let mut shapes = Vec::new();
    for i in 0..10 {
        let major = 64.0 + 8.0 * i as f64;
        let minor = major / (2.0 + 0.2 * i as f64);
        let ang = (-40.0 + 9.0 * i as f64).to_radians();
        let (s, c) = ang.sin_cos();
        let bar = i % 2 == 0;
        shapes.push(
            BinaryMask::from_fn(192, 192, |x, y| {
                let (dx, dy) = (x as f64 - 95.3, y as f64 - 96.6);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                if bar {
                    u.abs() <= major / 2.0 && v.abs() <= minor / 2.0
                } else {
                    (2.0 * u / major).powi(2) + (2.0 * v / minor).powi(2) <= 1.0
                }
            })
            .unwrap(),
        );
    }
    let mut rng = seed::rng(2);
    let (mut worst_c, mut worst_o): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let theta = rng.gen_range(-45f64..=45.0).to_radians();
        let scale = rng.gen_range(0.75..=1.5);
        let t = (
            rng.gen_range(-20..=20) as f64,
            rng.gen_range(-20..=20) as f64,
        );
        for m in &shapes {
            let before = compute_moments(m).unwrap();
            // place the 192² frame in the middle of a 384² frame, then transform
            let tr =
                SimilarityTransform::new((t.0 + 96.0, t.1 + 96.0), theta, scale, before.centroid())
                    .unwrap();
            let warped = objmark::warp_mask(m, &tr, 384, 384).unwrap();
            let after = compute_moments(&warped).unwrap();
            let expect = tr.apply(before.centroid().0, before.centroid().1);
            let (cx, cy) = after.centroid();
            worst_c = worst_c.max((cx - expect.0).hypot(cy - expect.1));
            let d = wrap_half_turn(
                after.principal_orientation() - before.principal_orientation() - theta,
            );
            worst_o = worst_o.max(d.abs());
        }
    }
    within(
        Duration::from_secs(30),
        start,
        outcome(
            worst_c <= 1.0 && worst_o <= 0.02,
            format!("1000 pairs; worst centroid error {worst_c:.3} px, worst orientation error {worst_o:.4} rad"),
        ),
    )
}

fn canvas_mae(a: &SyncObject, b: &SyncObject) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, (&ma, &mb)) in a.mask().data().iter().zip(b.mask().data()).enumerate() {
        if ma && mb {
            for c in 0..3 {
                sum += (a.canvas().data()[3 * i + c] - b.canvas().data()[3 * i + c]).abs();
            }
            count += 3;
        }
    }
    sum / count as f64
}

fn ac3_sync_invariance() -> Outcome {
    let start = Instant::now();
    let c = corpus();
    let n = 256;
    let (mut mae_sum, mut iou_sum, mut pairs) = (0.0, 0.0, 0usize);
    let (mut worst_mae, mut worst_iou): (f64, f64) = (0.0, 1.0);
    for (i, item) in c.items.iter().enumerate() {
        let (reference, _) = synchronize(&item.image, &item.mask, n, SyncAblation::FULL).unwrap();
        for k in 0..20u64 {
            let s = seed::derive(seed::derive(3, i as u64), k);
            let bg = &c.backgrounds[(k as usize + i) % c.backgrounds.len()];
            let spec =
                sample_attack(s, &item.mask, bg.image.dims(), &AttackRanges::default()).unwrap();
            let (composite, gt) = crop_paste(&item.image, &item.mask, &bg.image, &spec).unwrap();
            let (attacked, _) =
                synchronize(&composite.quantized(), &gt, n, SyncAblation::FULL).unwrap();
            let mae = canvas_mae(&reference, &attacked);
            let j = iou(reference.mask(), attacked.mask()).unwrap();
            mae_sum += mae;
            iou_sum += j;
            pairs += 1;
            worst_mae = worst_mae.max(mae);
            worst_iou = worst_iou.min(j);
        }
    }
    let (mae, mean_iou) = (mae_sum / pairs as f64, iou_sum / pairs as f64);
    within(
        Duration::from_secs(300),
        start,
        outcome(
            worst_mae <= 4.0 / 255.0 && worst_iou >= 0.97,
            format!(
                "{pairs} pairs; MAE mean {:.2}/255 worst {:.2}/255; IoU mean {mean_iou:.4} worst {worst_iou:.4}",
                mae * 255.0,
                worst_mae * 255.0
            ),
        ),
    )
}

fn ac4_idempotence() -> Outcome {
    let c = corpus();
    let n = 256;
    let mut failures = Vec::new();
    let (mut wt, mut wr, mut ws): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for item in &c.items {
        let (obj, _) = synchronize(&item.image, &item.mask, n, SyncAblation::FULL).unwrap();
        let (_, rec) = synchronize(obj.canvas(), obj.mask(), n, SyncAblation::FULL).unwrap();
        let t = rec.transform;
        let (cx, cy) = rec.source_centroid;
        let (mx, my) = t.apply(cx, cy);
        let shift = (mx - cx).hypot(my - cy);
        let rot = wrap_half_turn(t.rotation).abs();
        let sc = (t.scale - 1.0).abs();
        wt = wt.max(shift);
        wr = wr.max(rot);
        ws = ws.max(sc);
        if shift > 0.5 || rot > 0.01 || sc > 0.02 {
            failures.push(item.id.clone());
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{}/{} objects within tolerance; worst shift {wt:.3} px, rotation {wr:.4} rad, scale {:.2}%{}",
            c.items.len() - failures.len(),
            c.items.len(),
            ws * 100.0,
            if failures.is_empty() { String::new() } else { format!("; failing {failures:?}") }
        ),
    )
}

fn ac5_rst() -> Outcome {
    let recs = rst_run();
    let b = mean_bar(recs);
    let errors = recs.iter().filter(|r| !r.error.is_empty()).count();
    outcome(
        b >= 0.95,
        format!(
            "mean BAR {b:.4} over {} attacked images ({errors} error rows)",
            recs.len()
        ),
    )
}

/// Regression values of the distortion run, pinned from the first accepted
/// run. Tolerance allows for libm differences across platforms.
const PINNED_BAR: [(&str, f64); 14] = [
    ("brightness:1.2", 1.0000),
    ("contrast:1.2", 1.0000),
    ("gaussian_blur:3", 0.9687),
    ("gaussian_noise:0.05", 1.0000),
    ("hue:0.1", 0.9987),
    ("jpeg:50", 0.9993),
    ("jpeg:60", 1.0000),
    ("jpeg:70", 1.0000),
    ("jpeg:80", 1.0000),
    ("jpeg:90", 1.0000),
    ("median_blur:5", 0.9967),
    ("none", 1.0000),
    ("salt_pepper:0.1", 0.8987),
    ("saturation:1.2", 1.0000),
];
const PIN_TOLERANCE: f64 = 0.02;

fn ac6_distortions() -> Outcome {
    let start = Instant::now();
    let cfg = EvalConfig {
        distortions: DistortionBank::Preset(BankPreset::Standard),
        ..base_config()
    };
    let mut recs = run_eval_on(corpus(), &cfg).unwrap();
    // JPEG at the remaining qualities of 50 and above
    let sweep = EvalConfig {
        distortions: DistortionBank::List(
            [60.0, 70.0, 80.0, 90.0]
                .iter()
                .map(|&q| objmark::DistortionSpec::new(DistortionKind::Jpeg, q).unwrap())
                .collect(),
        ),
        ..base_config()
    };
    recs.extend(run_eval_on(corpus(), &sweep).unwrap());
    let aggs = aggregate_by_distortion(&recs);
    let mut pass = true;
    let mut parts = Vec::new();
    for a in aggs.iter().filter(|a| a.label != "all") {
        let kind = a.label.split(':').next().unwrap();
        let floor = match kind {
            "gaussian_noise" | "salt_pepper" | "jpeg" => 0.70,
            _ => 0.80,
        };
        let mut ok = a.bar >= floor;
        if let Some((_, pinned)) = PINNED_BAR.iter().find(|(l, _)| *l == a.label) {
            if !pinned.is_nan() && (a.bar - pinned).abs() > PIN_TOLERANCE {
                ok = false;
                parts.push(format!("{} drifted from pinned {pinned:.4}", a.label));
            }
        }
        pass &= ok;
        parts.push(format!(
            "{}={:.4}{}",
            a.label,
            a.bar,
            if ok { "" } else { "(!)" }
        ));
    }
    within(
        Duration::from_secs(1200),
        start,
        outcome(pass, parts.join(" ")),
    )
}

fn ac7_segmentation_bias() -> Outcome {
    let cfg = EvalConfig {
        mask_source: MaskSource::Perturbed { target_iou: 0.96 },
        ..base_config()
    };
    let perturbed = run_eval_on(corpus(), &cfg).unwrap();
    let (gt, pb) = (mean_bar(rst_run()), mean_bar(&perturbed));
    let ious: Vec<f64> = perturbed
        .iter()
        .filter(|r| r.is_scored())
        .map(|r| r.mask_iou)
        .collect();
    let (lo, hi) = ious
        .iter()
        .fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let in_band = ious.iter().all(|v| (v - 0.96).abs() <= 0.02);
    outcome(
        in_band && gt - pb <= 0.05,
        format!(
            "BAR gt {gt:.4}, perturbed {pb:.4}, drop {:.4}; achieved IoU in [{lo:.4}, {hi:.4}]",
            gt - pb
        ),
    )
}

fn ac8_ablation_order() -> Outcome {
    let run = |id: u8| {
        let cfg = EvalConfig {
            ablation_id: id,
            ..base_config()
        };
        mean_bar(&run_eval_on(corpus(), &cfg).unwrap())
    };
    let full = mean_bar(rst_run());
    let (rot, scale, trans) = (run(2), run(3), run(4));
    let pass = full - rot > full - trans && full - scale > full - trans;
    outcome(
        pass,
        format!("BAR full {full:.4}; no-rotation {rot:.4}; no-scale {scale:.4}; no-translation {trans:.4}"),
    )
}

fn ac9_visual_quality() -> Outcome {
    let c = corpus();
    let cfg = base_config();
    let plan = codec::make_plan(cfg.key, cfg.n, cfg.block_size, cfg.message_length).unwrap();
    let (mut min_p, mut min_s, mut sum_p, mut sum_s) = (f64::INFINITY, f64::INFINITY, 0.0, 0.0);
    for (i, item) in c.items.iter().enumerate() {
        let msg = codec::MessageBits::random(cfg.message_length, i as u64).unwrap();
        let wm = codec::embed_into_host(&item.image, &item.mask, &msg, &plan, cfg.n)
            .unwrap()
            .quantized();
        let p = psnr(&wm, &item.image, None).unwrap();
        let s = ssim(&wm, &item.image).unwrap();
        min_p = min_p.min(p);
        min_s = min_s.min(s);
        sum_p += p;
        sum_s += s;
    }
    let k = c.items.len() as f64;
    // judged on corpus means, the statistic the reference envelope reports;
    // minima are printed alongside
    outcome(
        sum_p / k >= 38.0 && sum_s / k >= 0.97,
        format!(
            "PSNR mean {:.2} dB min {min_p:.2} dB; SSIM mean {:.4} min {min_s:.4}",
            sum_p / k,
            sum_s / k
        ),
    )
}

fn ac10_determinism() -> Outcome {
    let cfg = EvalConfig {
        mask_source: MaskSource::Perturbed { target_iou: 0.96 },
        distortions: DistortionBank::List(vec![
            objmark::DistortionSpec::new(DistortionKind::GaussianNoise, 0.05).unwrap(),
            objmark::DistortionSpec::new(DistortionKind::SaltPepper, 0.1).unwrap(),
        ]),
        corpus: CorpusSource::Desk {
            seed: CORPUS_SEED,
            count: 12,
        },
        ..base_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let cfg = EvalConfig {
            output: Some(path.clone()),
            ..cfg.clone()
        };
        objmark::run_eval(&cfg).unwrap();
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    // the in-memory path agrees with the file path too
    let again = results_csv(&run_eval_on(&desk_corpus(CORPUS_SEED, 12).unwrap(), &cfg).unwrap());
    outcome(
        a == b && a == again.as_bytes(),
        format!("two runs, {} bytes each, identical: {}", a.len(), a == b),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("AC1 moment oracle equivalence", ac1_moment_oracle),
        ("AC2 centroid/orientation equivariance", ac2_equivariance),
        ("AC3 sync attack invariance", ac3_sync_invariance),
        ("AC4 sync idempotence", ac4_idempotence),
        ("AC5 end-to-end RST robustness", ac5_rst),
        ("AC6 distortion robustness floor", ac6_distortions),
        ("AC7 segmentation-bias tolerance", ac7_segmentation_bias),
        ("AC8 ablation direction", ac8_ablation_order),
        ("AC9 visual quality", ac9_visual_quality),
        ("AC10 determinism", ac10_determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let o = f();
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
