use std::path::Path;
use std::process::{Command, Output};

use objmark::corpus::desk_corpus;
use objmark::{BinaryMask, Image};

fn objmark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objmark"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

/// Writes one desk item and one background into `dir`.
fn fixture(dir: &Path) {
    let c = desk_corpus(21, 1).unwrap();
    c.items[0].image.save(dir.join("host.png")).unwrap();
    c.items[0].mask.save(dir.join("mask.png")).unwrap();
    c.backgrounds[0].image.save(dir.join("bg.png")).unwrap();
}

#[test]
fn embed_attack_sync_decode_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let msg = "101100111000101011110000110101";

    let out = objmark(&[
        "embed",
        "--image",
        s(&d.join("host.png")),
        "--mask",
        s(&d.join("mask.png")),
        "--message",
        msg,
        "--key",
        "0xc0ffee",
        "--out",
        s(&d.join("wm.png")),
    ]);
    let j = stdout_json(&out);
    assert!(j["psnr"].as_f64().unwrap() > 38.0);

    let out = objmark(&[
        "attack",
        "--image",
        s(&d.join("wm.png")),
        "--mask",
        s(&d.join("mask.png")),
        "--background",
        s(&d.join("bg.png")),
        "--seed",
        "7",
        "--distort",
        "jpeg=80",
        "--out",
        s(&d.join("attacked.png")),
        "--mask-out",
        s(&d.join("gt.png")),
    ]);
    let spec = stdout_json(&out);
    assert!(spec["rotation"].as_f64().unwrap().abs() <= std::f64::consts::FRAC_PI_4 + 1e-9);
    std::fs::write(d.join("spec.json"), spec.to_string()).unwrap();
    assert_eq!(
        Image::load(d.join("attacked.png")).unwrap().dims(),
        (512, 512)
    );

    // replaying the spec without distortions reproduces the geometry
    let out = objmark(&[
        "attack",
        "--image",
        s(&d.join("wm.png")),
        "--mask",
        s(&d.join("mask.png")),
        "--background",
        s(&d.join("bg.png")),
        "--spec",
        s(&d.join("spec.json")),
        "--out",
        s(&d.join("replay.png")),
        "--mask-out",
        s(&d.join("gt2.png")),
    ]);
    stdout_json(&out);
    assert_eq!(
        BinaryMask::load(d.join("gt.png")).unwrap(),
        BinaryMask::load(d.join("gt2.png")).unwrap()
    );

    let out = objmark(&[
        "decode",
        "--image",
        s(&d.join("attacked.png")),
        "--mask",
        s(&d.join("gt.png")),
        "--key",
        "c0ffee",
        "--length",
        "30",
    ]);
    let j = stdout_json(&out);
    assert_eq!(j["bits"].as_str().unwrap(), msg);

    let out = objmark(&[
        "sync",
        "--image",
        s(&d.join("attacked.png")),
        "--mask",
        s(&d.join("gt.png")),
        "--n",
        "128",
        "--out",
        s(&d.join("canvas.png")),
        "--record",
        s(&d.join("rec.json")),
    ]);
    assert!(out.status.success());
    assert_eq!(
        Image::load(d.join("canvas.png")).unwrap().dims(),
        (128, 128)
    );
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rec.json")).unwrap()).unwrap();
    assert!(rec["transform"]["scale"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);

    // invalid input
    let out = objmark(&[
        "decode",
        "--image",
        "/nonexistent.png",
        "--mask",
        "/nonexistent.png",
        "--key",
        "1",
        "--length",
        "30",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = objmark(&[
        "embed",
        "--image",
        s(&d.join("host.png")),
        "--mask",
        s(&d.join("mask.png")),
        "--message",
        "10201",
        "--key",
        "1",
        "--out",
        s(&d.join("x.png")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = objmark(&[
        "attack",
        "--image",
        "a",
        "--mask",
        "b",
        "--background",
        "c",
        "--out",
        "d",
    ]);
    assert_eq!(out.status.code(), Some(2), "missing --spec/--seed");

    // no signal: a flat object has no luminance variation
    Image::filled(64, 64, [0.5; 3])
        .unwrap()
        .save(d.join("flat.png"))
        .unwrap();
    BinaryMask::from_fn(64, 64, |x, y| (8..56).contains(&x) && (16..48).contains(&y))
        .unwrap()
        .save(d.join("flat_mask.png"))
        .unwrap();
    let out = objmark(&[
        "decode",
        "--image",
        s(&d.join("flat.png")),
        "--mask",
        s(&d.join("flat_mask.png")),
        "--key",
        "1",
        "--length",
        "30",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // placement infeasible: background smaller than the object
    Image::new(40, 40)
        .unwrap()
        .save(d.join("tiny_bg.png"))
        .unwrap();
    let out = objmark(&[
        "attack",
        "--image",
        s(&d.join("host.png")),
        "--mask",
        s(&d.join("mask.png")),
        "--background",
        s(&d.join("tiny_bg.png")),
        "--seed",
        "1",
        "--out",
        s(&d.join("y.png")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn eval_and_gen_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = objmark(&[
        "gen-corpus",
        "--seed",
        "2",
        "--count",
        "2",
        "--out-dir",
        s(&d.join("corpus")),
    ]);
    let j = stdout_json(&out);
    assert_eq!(j["items"], 2);
    assert!(d.join("corpus/images/desk_001.png").exists());
    assert!(d.join("corpus/masks/desk_001.png").exists());

    let cfg = serde_json::json!({
        "corpus": {
            "type": "directory",
            "images": d.join("corpus/images"),
            "masks": d.join("corpus/masks"),
            "backgrounds": d.join("corpus/backgrounds"),
        },
        "key": "0xabc",
        "distortions": [{"kind": "brightness", "parameter": 1.1}],
        "seed": 5,
    });
    std::fs::write(d.join("cfg.json"), cfg.to_string()).unwrap();
    let run = |name: &str| {
        let out = objmark(&[
            "eval",
            "--config",
            s(&d.join("cfg.json")),
            "--out",
            s(&d.join(name)),
        ]);
        stdout_json(&out);
        std::fs::read(d.join(name)).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(
        "image_id,attack,distortion,bar,psnr,ssim,mask_iou,decode_confidence,ablation_id,error\n"
    ));
    assert_eq!(text.lines().count(), 1 + 2 + 2);
    assert!(d.join("a_occupancy.csv").exists());

    std::fs::write(d.join("bad.json"), r#"{"ablation_id": 9}"#).unwrap();
    let out = objmark(&[
        "eval",
        "--config",
        s(&d.join("bad.json")),
        "--out",
        s(&d.join("c.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
