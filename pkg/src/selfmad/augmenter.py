"""Global appearance augmentations that keep an image bona fide.

Applied in a fixed order: RGB shift, HSV shift, brightness/contrast, then
exactly one of (downscale, sharpen).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .imgcore import as_generator, clamp01, resize_bilinear, round_half_up


@dataclass(frozen=True)
class AugmentConfig:
    rgb_shift_max: float = 20.0 / 255.0
    hue_shift_max: float = 10.0  # degrees
    sat_shift_max: float = 0.1
    val_shift_max: float = 0.1
    brightness_max: float = 0.1
    contrast_max: float = 0.1
    downscale_factors: tuple = (2, 4)
    sharpen_strength_range: tuple = (0.2, 0.5)
    sharpen_sigma: float = 1.0
    p_rgb_shift: float = 1.0
    p_hsv: float = 1.0
    p_brightness_contrast: float = 1.0
    # probability that the OneOf branch picks downscale over sharpen
    p_downscale: float = 0.5

    def __post_init__(self):
        for name in ("rgb_shift_max", "hue_shift_max", "sat_shift_max", "val_shift_max",
                     "brightness_max", "contrast_max", "sharpen_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("p_rgb_shift", "p_hsv", "p_brightness_contrast", "p_downscale"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        object.__setattr__(self, "downscale_factors", tuple(int(f) for f in self.downscale_factors))
        object.__setattr__(self, "sharpen_strength_range", tuple(float(s) for s in self.sharpen_strength_range))
        if not self.downscale_factors or any(f < 2 for f in self.downscale_factors):
            raise ValueError("downscale factors must be integers >= 2")
        lo, hi = self.sharpen_strength_range
        if lo > hi:
            raise ValueError("sharpen_strength_range must be ordered")


def rgb_shift(img: np.ndarray, offsets) -> np.ndarray:
    off = np.asarray(offsets, dtype=np.float64)
    return clamp01(img + off[: img.shape[2]])


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexagonal HSV; hue in degrees ``[0, 360)``, hue is 0 where saturation is 0."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(
        v == r,
        np.mod((g - b) / safe_c, 6.0),
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(c > 0, 60.0 * h, 0.0)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    c = v * s
    hp = np.mod(h, 360.0) / 60.0
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    m = v - c
    sector = np.floor(hp).astype(np.int64) % 6
    z = np.zeros_like(c)
    table = [(c, x, z), (x, c, z), (z, c, x), (z, x, c), (x, z, c), (c, z, x)]
    out = np.zeros(hsv.shape, dtype=np.float64)
    for i, (rr, gg, bb) in enumerate(table):
        sel = sector == i
        out[..., 0] = np.where(sel, rr, out[..., 0])
        out[..., 1] = np.where(sel, gg, out[..., 1])
        out[..., 2] = np.where(sel, bb, out[..., 2])
    return out + m[..., None]


def hue_saturation_value(img: np.ndarray, dh: float, ds: float, dv: float) -> np.ndarray:
    if img.shape[2] == 1:
        return clamp01(img + dv)
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = np.mod(hsv[..., 0] + dh, 360.0)
    hsv[..., 1] = clamp01(hsv[..., 1] + ds)
    hsv[..., 2] = clamp01(hsv[..., 2] + dv)
    return clamp01(hsv_to_rgb(hsv))


def brightness_contrast(img: np.ndarray, db: float, dc: float) -> np.ndarray:
    return clamp01((img - 0.5) * (1.0 + dc) + 0.5 + db)


def random_downscale(img: np.ndarray, factor: int) -> np.ndarray:
    h, w = img.shape[:2]
    dh = max(1, round_half_up(h / factor))
    dw = max(1, round_half_up(w / factor))
    small = resize_bilinear(img, dh, dw)
    return clamp01(resize_bilinear(small, h, w))


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Per-channel Gaussian blur, edge-replicated, kernel truncated at 3 sigma."""
    if sigma <= 0:
        return img.copy()
    sig = (sigma, sigma, 0.0) if img.ndim == 3 else sigma
    return gaussian_filter(img, sig, mode="nearest", truncate=3.0)


def sharpen(img: np.ndarray, strength: float, sigma: float = 1.0) -> np.ndarray:
    """Unsharp mask ``v + strength * (v - blur(v))``."""
    if strength == 0:
        return img.copy()
    return clamp01(img + strength * (img - gaussian_blur(img, sigma)))


def augment(img: np.ndarray, cfg: AugmentConfig, rng, record: Optional[dict] = None) -> np.ndarray:
    """Produce the augmented source from a bona fide image.

    Drawn parameters are written into ``record`` when given.
    """
    gen = as_generator(rng)
    params: dict = {}
    out = img
    if gen.random() < cfg.p_rgb_shift:
        offs = gen.uniform(-cfg.rgb_shift_max, cfg.rgb_shift_max, size=3)
        params["rgb_shift"] = offs.tolist()
        out = rgb_shift(out, offs)
    if gen.random() < cfg.p_hsv:
        dh = gen.uniform(-cfg.hue_shift_max, cfg.hue_shift_max)
        ds = gen.uniform(-cfg.sat_shift_max, cfg.sat_shift_max)
        dv = gen.uniform(-cfg.val_shift_max, cfg.val_shift_max)
        params["hsv"] = [dh, ds, dv]
        out = hue_saturation_value(out, dh, ds, dv)
    if gen.random() < cfg.p_brightness_contrast:
        db = gen.uniform(-cfg.brightness_max, cfg.brightness_max)
        dc = gen.uniform(-cfg.contrast_max, cfg.contrast_max)
        params["brightness_contrast"] = [db, dc]
        out = brightness_contrast(out, db, dc)
    if gen.random() < cfg.p_downscale:
        factor = int(gen.choice(cfg.downscale_factors))
        params["downscale"] = factor
        out = random_downscale(out, factor)
    else:
        strength = gen.uniform(*cfg.sharpen_strength_range)
        params["sharpen"] = strength
        out = sharpen(out, strength, cfg.sharpen_sigma)
    if record is not None:
        record.update(params)
    return out
