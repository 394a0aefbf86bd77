"""Procedural face-like images with matching segmentation maps.

A stand-in corpus for desk-scale experiments: layered ellipses for the
facial parts, 1/f background and skin texture, mild optical blur.  Class
indices follow the 19-class parsing vocabulary used by ``pixelgen``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imgcore import BoundingBox, RngStream, save_image, write_raster8


def pink_noise(shape, gen: np.random.Generator, beta: float = 1.0) -> np.ndarray:
    """Zero-mean, unit-std noise with amplitude spectrum ~ 1/f**beta."""
    h, w = shape
    white = np.fft.fft2(gen.standard_normal((h, w)))
    f = np.hypot(np.fft.fftfreq(h)[:, None], np.fft.fftfreq(w)[None, :])
    f[0, 0] = 1.0
    out = np.fft.ifft2(white / f ** beta).real
    out -= out.mean()
    return out / (out.std() + 1e-12)


def _ellipse(yy, xx, cy, cx, ry, rx, angle=0.0):
    c, s = np.cos(angle), np.sin(angle)
    dy, dx = yy - cy, xx - cx
    u = (dx * c + dy * s) / rx
    v = (-dx * s + dy * c) / ry
    return u * u + v * v <= 1.0


def generate_face(gen: np.random.Generator, size: int = 256):
    """Return ``(image (H, W, 3), segmentation (H, W) uint8, BoundingBox)``."""
    h = w = size
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    img = np.zeros((h, w, 3))
    seg = np.zeros((h, w), dtype=np.uint8)

    def paint(region, color, cls, tex=0.0):
        col = np.asarray(color, dtype=np.float64)
        layer = np.broadcast_to(col, (h, w, 3)).copy()
        if tex:
            layer += tex * pink_noise((h, w), gen, beta=1.2)[:, :, None]
        img[region] = layer[region]
        seg[region] = cls

    bg = gen.uniform(0.2, 0.85, size=3)
    ramp = (yy / h - 0.5)[:, :, None] * gen.uniform(-0.2, 0.2, size=3)
    img[:] = bg + ramp + 0.05 * pink_noise((h, w), gen, beta=1.0)[:, :, None]

    cy = h * gen.uniform(0.48, 0.56)
    cx = w * gen.uniform(0.45, 0.55)
    ry = h * gen.uniform(0.26, 0.32)
    rx = ry * gen.uniform(0.72, 0.85)
    tilt = gen.uniform(-0.12, 0.12)
    skin = np.array([gen.uniform(0.45, 0.95), 0, 0])
    skin[1] = skin[0] * gen.uniform(0.68, 0.82)
    skin[2] = skin[0] * gen.uniform(0.52, 0.70)
    hair_col = gen.uniform(0.05, 0.55) * np.array([1.0, gen.uniform(0.7, 0.95), gen.uniform(0.5, 0.85)])
    cloth = gen.uniform(0.05, 0.9, size=3)

    paint((yy > cy + ry * 1.05) & (np.abs(xx - cx) < rx * 1.9), cloth, 18, tex=0.03)
    paint((yy > cy + ry * 0.4) & (np.abs(xx - cx) < rx * 0.55) & (yy <= cy + ry * 1.2), skin * 0.9, 17, tex=0.02)
    paint(_ellipse(yy, xx, cy - ry * 0.15, cx, ry * 1.12, rx * 1.18, tilt), hair_col, 13, tex=0.06)
    for side in (-1, 1):
        paint(_ellipse(yy, xx, cy, cx + side * rx * 0.98, ry * 0.16, rx * 0.12), skin * 0.95, 8 if side < 0 else 9, tex=0.02)
    face = _ellipse(yy, xx, cy, cx, ry, rx, tilt) & (yy > cy - ry * gen.uniform(0.55, 0.75))
    face |= _ellipse(yy, xx, cy + ry * 0.1, cx, ry * 0.9, rx, tilt)
    shade = 1.0 - 0.25 * (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    paint(face, skin, 1, tex=0.025)
    img[face] *= np.clip(shade[face], 0.6, 1.0)[:, None]

    eye_y = cy - ry * gen.uniform(0.1, 0.2)
    eye_dx = rx * gen.uniform(0.36, 0.44)
    eye_r = rx * gen.uniform(0.11, 0.15)
    iris = gen.uniform(0.05, 0.5, size=3)
    brow_col = hair_col * 0.8
    for side, (eye_cls, brow_cls) in ((-1, (4, 6)), (1, (5, 7))):
        ex = cx + side * eye_dx
        paint(_ellipse(yy, xx, eye_y - eye_r * 1.6, ex, eye_r * 0.28, eye_r * 1.3, side * 0.1), brow_col, brow_cls, tex=0.03)
        paint(_ellipse(yy, xx, eye_y, ex, eye_r * 0.55, eye_r), [0.92, 0.9, 0.88], eye_cls)
        pupil = _ellipse(yy, xx, eye_y, ex + gen.uniform(-0.2, 0.2) * eye_r, eye_r * 0.5, eye_r * 0.5)
        paint(pupil, iris, eye_cls)
        paint(_ellipse(yy, xx, eye_y, ex, eye_r * 0.2, eye_r * 0.2), [0.02, 0.02, 0.02], eye_cls)
    nose_r = ry * gen.uniform(0.08, 0.12)
    paint(_ellipse(yy, xx, cy + ry * 0.2, cx, nose_r * 1.8, nose_r), skin * 0.85, 2, tex=0.02)
    mouth_y = cy + ry * gen.uniform(0.45, 0.55)
    mouth_w = rx * gen.uniform(0.3, 0.42)
    lip = np.array([gen.uniform(0.5, 0.85), gen.uniform(0.15, 0.35), gen.uniform(0.2, 0.4)])
    paint(_ellipse(yy, xx, mouth_y - mouth_w * 0.12, cx, mouth_w * 0.16, mouth_w), lip, 11, tex=0.02)
    paint(_ellipse(yy, xx, mouth_y + mouth_w * 0.14, cx, mouth_w * 0.2, mouth_w * 0.9), lip * 0.95, 12, tex=0.02)
    paint(_ellipse(yy, xx, mouth_y + mouth_w * 0.01, cx, mouth_w * 0.04, mouth_w * 0.85), lip * 0.4, 10)
    if gen.random() < 0.2:
        ring = _ellipse(yy, xx, eye_y, cx, eye_r * 1.3, eye_dx + eye_r * 1.5) & ~_ellipse(
            yy, xx, eye_y, cx, eye_r * 1.1, eye_dx + eye_r * 1.3)
        paint(ring, [0.1, 0.1, 0.1], 3)

    img = gaussian_filter(img, (0.8, 0.8, 0), mode="nearest")
    img += 0.01 * gen.standard_normal(img.shape)
    img = np.clip(img, 0.0, 1.0)
    side = int(round(2.1 * max(ry, rx)))
    side = min(side, h, w)
    x0 = int(np.clip(round(cx - side / 2), 0, w - side))
    y0 = int(np.clip(round(cy - side / 2), 0, h - side))
    return img, seg, BoundingBox(x0, y0, side)


def write_corpus(out_dir, n: int, seed: int = 0, size: int = 256, with_seg: bool = True) -> list[Path]:
    """Write ``face_XXXX.ppm`` images, ``.seg.png`` maps and a ``bboxes.jsonl`` sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    lines = []
    for i in range(n):
        gen = RngStream(seed, ("faces", i)).generator()
        img, seg, box = generate_face(gen, size)
        p = out_dir / f"face_{i:04d}.ppm"
        save_image(img, p)
        if with_seg:
            write_raster8(seg[:, :, None], out_dir / f"face_{i:04d}.seg.png")
        lines.append(json.dumps({"image": p.name, "x0": box.x0, "y0": box.y0, "side": box.side}))
        paths.append(p)
    (out_dir / "bboxes.jsonl").write_text("\n".join(lines) + "\n")
    return paths
