"""Smoke test for the objmark Python extension.

Build the extension and make it importable, then run this script:

    cargo build --release -p objmark-py
    cp target/release/libobjmark_py.so python/objmark.so   # .dylib on macOS
    python3 python/smoke_test.py

or install it with `maturin develop -m crates/py/Cargo.toml`.
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import objmark  # noqa: E402


def textured_host(w, h):
    data = bytearray()
    for y in range(h):
        for x in range(w):
            t = math.sin(0.11 * x + 0.05 * y) * math.cos(0.07 * y)
            data += bytes(
                int(round(255 * min(1.0, max(0.0, v))))
                for v in (0.5 + 0.2 * t, 0.45 - 0.15 * t, 0.4 + 0.1 * math.sin(0.03 * x))
            )
    return objmark.Image(w, h, bytes(data))


def ellipse_mask(w, h, cx, cy, a, b, angle):
    c, s = math.cos(angle), math.sin(angle)
    vals = bytearray()
    for y in range(h):
        for x in range(w):
            dx, dy = x - cx, y - cy
            u, v = c * dx + s * dy, -s * dx + c * dy
            vals.append(1 if (u / a) ** 2 + (v / b) ** 2 <= 1.0 else 0)
    return objmark.BinaryMask(w, h, bytes(vals))


def main():
    host = textured_host(256, 256)
    mask = ellipse_mask(256, 256, 128.0, 124.0, 100.0, 62.0, 0.3)

    m = objmark.compute_moments(mask)
    assert abs(m.principal_orientation() - 0.3) < 0.02, m.principal_orientation()

    canvas, canvas_mask, record = objmark.synchronize(host, mask, n=128)
    assert (canvas.width, canvas.height) == (128, 128)
    assert "transform" in json.loads(record)

    message = "110100111010001011100101011001"
    plan = objmark.EmbedPlan("0x5eed", len(message))
    marked = objmark.embed_into_host(host, mask, message, plan)
    quality = objmark.psnr(marked, host)
    assert quality > 38.0, quality
    similarity = objmark.ssim(marked, host)
    assert similarity > 0.95, similarity

    background = objmark.Image.filled(512, 512, [0.3, 0.5, 0.6])
    spec = objmark.sample_attack(7, mask, 512, 512)
    composite, gt = objmark.crop_paste(marked, mask, background, spec)
    composite = objmark.distort(composite, "jpeg=70", 1)
    bits, confidence, used, flipped = objmark.decode(composite, gt, plan)
    accuracy = objmark.bar(bits, message)
    assert accuracy >= 0.9, accuracy

    noisy, achieved, converged = objmark.perturb_mask(mask, 0.95, 3)
    assert converged and abs(objmark.iou(noisy, mask) - achieved) < 1e-12

    flat = objmark.Image.filled(64, 64, [0.5, 0.5, 0.5])
    square = objmark.BinaryMask(64, 64, bytes(1 if 16 <= i % 64 < 48 and 16 <= i // 64 < 48 else 0 for i in range(64 * 64)))
    try:
        objmark.decode(flat, square, objmark.EmbedPlan("1", 10, n=64))
    except objmark.NoSignalError:
        pass
    else:
        raise AssertionError("flat object decoded")

    print(
        f"ok: psnr {quality:.2f} dB, ssim {similarity:.4f}, bar {accuracy:.3f}, confidence {confidence:.3f}, "
        f"attack {json.loads(spec)['rotation']:.3f} rad"
    )


if __name__ == "__main__":
    main()
