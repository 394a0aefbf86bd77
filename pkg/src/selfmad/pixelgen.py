"""Pixel-space morphing artifacts: geometric warps, blending masks, blending."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import binary_dilation, gaussian_filter

from .imgcore import as_generator, clamp01, sample_bilinear

BLEND_FACTORS = (0.5, 0.5, 0.5, 0.375, 0.25, 0.125)

# CelebAMask-HQ parsing vocabulary
SEG_CLASSES = (
    "background", "skin", "nose", "eyeglasses", "l_eye", "r_eye", "l_brow", "r_brow",
    "l_ear", "r_ear", "mouth", "u_lip", "l_lip", "hair", "hat", "earring", "necklace",
    "neck", "cloth",
)
NUM_SEG_CLASSES = len(SEG_CLASSES)


@dataclass(frozen=True)
class GeoConfig:
    translate_max: float = 0.02
    elastic_alpha_range: tuple = (10.0, 40.0)
    elastic_sigma_range: tuple = (8.0, 16.0)
    scale_range: tuple = (0.95, 1.05)
    # alpha/sigma ranges are stated for this side length and scaled with image width
    reference_size: int = 384
    dilate_radius: int = 2
    parts_k_choices: tuple = (2, 3, 4)

    def __post_init__(self):
        for name in ("elastic_alpha_range", "elastic_sigma_range", "scale_range", "parts_k_choices"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not 0.0 <= self.translate_max <= 0.1:
            raise ValueError("translate_max must lie in [0, 0.1]")
        a_lo, a_hi = self.elastic_alpha_range
        s_lo, s_hi = self.elastic_sigma_range
        f_lo, f_hi = self.scale_range
        if not (0 <= a_lo <= a_hi):
            raise ValueError("elastic_alpha_range must be ordered and non-negative")
        if not (0 < s_lo <= s_hi):
            raise ValueError("elastic sigma must be positive")
        if not (0 < f_lo <= 1.0 <= f_hi):
            raise ValueError("scale_range must contain 1")
        if self.dilate_radius < 0:
            raise ValueError("dilate_radius must be non-negative")
        if not self.parts_k_choices or min(self.parts_k_choices) < 2:
            raise ValueError("parts_k_choices must be integers >= 2")


def _grid(h: int, w: int):
    return np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")


def translate(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Shift content by ``(dx, dy)`` pixels; vacated area is edge-replicated."""
    if dx == 0 and dy == 0:
        return img.copy()
    ys, xs = _grid(*img.shape[:2])
    return sample_bilinear(img, ys - dy, xs - dx)


def elastic_displacement(shape, alpha: float, sigma: float, rng) -> tuple[np.ndarray, np.ndarray]:
    gen = as_generator(rng)
    h, w = shape[:2]
    fields = []
    for _ in range(2):
        noise = gen.uniform(-1.0, 1.0, size=(h, w))
        fields.append(alpha * gaussian_filter(noise, sigma, mode="nearest", truncate=3.0))
    return fields[0], fields[1]


def elastic_transform(img: np.ndarray, alpha: float, sigma: float, rng) -> np.ndarray:
    """Smooth random warp: uniform noise fields blurred by ``sigma`` and scaled by ``alpha``."""
    ddy, ddx = elastic_displacement(img.shape, alpha, sigma, rng)
    if alpha == 0:
        return img.copy()
    ys, xs = _grid(*img.shape[:2])
    return sample_bilinear(img, ys + ddy, xs + ddx)


def scale_about_center(img: np.ndarray, factor: float) -> np.ndarray:
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    if factor == 1:
        return img.copy()
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = _grid(h, w)
    return sample_bilinear(img, cy + (ys - cy) / factor, cx + (xs - cx) / factor)


def geo_transform(img: np.ndarray, cfg: GeoConfig, rng, record: Optional[dict] = None) -> np.ndarray:
    """Translation, elastic warp and scaling in that order."""
    gen = as_generator(rng)
    h, w = img.shape[:2]
    dx = gen.uniform(-cfg.translate_max, cfg.translate_max) * w
    dy = gen.uniform(-cfg.translate_max, cfg.translate_max) * h
    ref = w / cfg.reference_size
    alpha = gen.uniform(*cfg.elastic_alpha_range) * ref
    sigma = gen.uniform(*cfg.elastic_sigma_range) * ref
    factor = gen.uniform(*cfg.scale_range)
    out = translate(img, dx, dy)
    out = elastic_transform(out, alpha, sigma, gen)
    out = scale_about_center(out, factor)
    if record is not None:
        record.update(translate=[dx, dy], elastic=[alpha, sigma], scale=factor)
    return clamp01(out)


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.astype(np.uint8)
    return binary_dilation(mask.astype(bool), structure=_disk(radius)).astype(np.uint8)


def make_mask(seg: Optional[np.ndarray], mode: str, rng, *, shape=None, dilate_radius: int = 2,
              k_choices=(2, 3, 4), record: Optional[dict] = None) -> np.ndarray:
    """Binary blending mask.

    ``full`` gives an all-ones mask of ``shape`` (or of ``seg``).  ``parts``
    unions ``k`` randomly chosen non-background classes present in ``seg``
    and dilates the union; with fewer than two classes present it falls back
    to ``full`` and records ``fallback=True``.
    """
    if mode not in ("full", "parts"):
        raise ValueError(f"unknown mask mode {mode!r}")
    if seg is not None:
        seg = np.asarray(seg)
        if seg.ndim == 3:
            seg = seg[:, :, 0]
        if seg.min() < 0 or seg.max() >= NUM_SEG_CLASSES:
            raise ValueError("segmentation indices outside the 19-class vocabulary")
        shape = seg.shape
    if shape is None:
        raise ValueError("full mask needs a shape or a segmentation map")
    info: dict = {"mask_mode": mode}
    if mode == "parts":
        if seg is None:
            raise ValueError("parts mode requires a segmentation map")
        gen = as_generator(rng)
        present = [int(c) for c in np.unique(seg) if c != 0]
        if len(present) < 2:
            info.update(mask_mode="full", fallback=True)
            mask = np.ones(shape[:2], dtype=np.uint8)
        else:
            k = int(gen.choice(k_choices))
            k = min(k, len(present))
            parts = sorted(int(c) for c in gen.choice(present, size=k, replace=False))
            info.update(parts=parts)
            mask = dilate(np.isin(seg, parts), dilate_radius)
    else:
        mask = np.ones(shape[:2], dtype=np.uint8)
    if record is not None:
        record.update(info)
    return mask


def blend(source: np.ndarray, warped: np.ndarray, mask: np.ndarray, a: float) -> np.ndarray:
    """Composite: ``source + a * (warped - source)`` inside the mask, ``source`` outside."""
    if source.shape != warped.shape:
        raise ValueError(f"shape mismatch {source.shape} vs {warped.shape}")
    if mask.shape != source.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match image {source.shape[:2]}")
    if not 0.0 < a <= 1.0:
        raise ValueError("blend factor must lie in (0, 1]")
    inside = mask.astype(bool)
    if source.ndim == 3:
        inside = inside[:, :, None]
    return np.where(inside, source + a * (warped - source), source)


def sample_blend_factor(rng) -> float:
    gen = as_generator(rng)
    return BLEND_FACTORS[int(gen.integers(len(BLEND_FACTORS)))]
