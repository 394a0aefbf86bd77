"""Frequency-space fingerprints: binary pattern synthesis and magnitude mixing.

The pattern's Fourier magnitude is mixed into the image magnitude with a
constant ``k`` while the image phase is kept, then transformed back.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .imgcore import as_generator, clamp01

PATTERN_KINDS = (
    "symmetric_grid",
    "asymmetric_grid",
    "square_checkerboard",
    "circular_checkerboard",
    "random_squares",
    "random_lines",
    "random_stripes",
)

# default draw ranges for pattern parameters (inclusive integer bounds)
PATTERN_RANGES = {
    "period": (8, 32),
    "cell": (8, 32),
    "ring_width": (6, 24),
    "square_count": (5, 20),
    "square_side": (4, 16),
    "line_count": (5, 20),
    "angle": (0.0, 180.0),
    "duty": (0.2, 0.5),
}


@dataclass
class PatternSpec:
    """Pattern kind plus any fixed parameters; missing ones are drawn at render time."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")


@dataclass(frozen=True)
class FreqConfig:
    k: float = 0.1
    dc_preserve: bool = True
    magnitude_normalization: str = "mean_match"
    per_channel_pattern: bool = False

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError("k must lie in [0, 1]")
        if self.magnitude_normalization not in ("mean_match", "none"):
            raise ValueError(f"unknown magnitude_normalization {self.magnitude_normalization!r}")


class SpectrumBuffer:
    """Per-channel complex spectrum of shape ``(H, W, C)``."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.complex128)
        if data.ndim == 2:
            data = data[:, :, None]
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)

    def phase(self) -> np.ndarray:
        return np.angle(self.data)

    @classmethod
    def from_polar(cls, magnitude: np.ndarray, phase: np.ndarray) -> "SpectrumBuffer":
        return cls(magnitude * np.exp(1j * phase))


def fft2(img: np.ndarray) -> SpectrumBuffer:
    """Unnormalised forward DFT per channel (DC bin is the pixel sum)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return SpectrumBuffer(np.fft.fft2(arr, axes=(0, 1)))


def ifft2(spec: SpectrumBuffer, clamp: bool = True) -> np.ndarray:
    """Inverse DFT scaled by ``1/(H*W)``; the imaginary residual is dropped."""
    out = np.fft.ifft2(spec.data, axes=(0, 1)).real
    return clamp01(out) if clamp else out


# ---------------------------------------------------------------------------
# patterns
# ---------------------------------------------------------------------------

def _draw_int(gen, params, key, rng_key=None):
    if key not in params:
        lo, hi = PATTERN_RANGES[rng_key or key]
        params[key] = int(gen.integers(lo, hi + 1))
    return int(params[key])


def _draw_float(gen, params, key, rng_key=None):
    if key not in params:
        lo, hi = PATTERN_RANGES[rng_key or key]
        params[key] = float(gen.uniform(lo, hi))
    return float(params[key])


def _grid_lines(h, w, py, px, thick=1):
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return ((yy % py) < thick) | ((xx % px) < thick)


def _draw_segment(canvas, y0, x0, y1, x1):
    n = int(max(abs(y1 - y0), abs(x1 - x0))) + 1
    ys = np.floor(np.linspace(y0, y1, 2 * n) + 0.5).astype(np.intp)
    xs = np.floor(np.linspace(x0, x1, 2 * n) + 0.5).astype(np.intp)
    ok = (ys >= 0) & (ys < canvas.shape[0]) & (xs >= 0) & (xs < canvas.shape[1])
    canvas[ys[ok], xs[ok]] = True


def gen_pattern(spec: PatternSpec, h: int, w: int, rng=None) -> np.ndarray:
    """Render a binary ``(H, W)`` pattern; drawn parameters are stored back into ``spec.params``."""
    if h < 8 or w < 8:
        raise ValueError("pattern dims must be >= 8")
    p = spec.params
    gen = as_generator(rng) if rng is not None else None

    def need_gen():
        if gen is None:
            raise ValueError(f"pattern {spec.kind} needs an rng for its missing parameters")
        return gen

    kind = spec.kind
    if kind == "symmetric_grid":
        if "period" not in p:
            need_gen()
        period = _draw_int(gen, p, "period")
        out = _grid_lines(h, w, period, period)
    elif kind == "asymmetric_grid":
        if "period_y" not in p or "period_x" not in p:
            need_gen()
        py = _draw_int(gen, p, "period_y", "period")
        px = _draw_int(gen, p, "period_x", "period")
        if "thick_y" not in p:
            p["thick_y"] = int(need_gen().integers(1, 3))
        if "thick_x" not in p:
            p["thick_x"] = int(need_gen().integers(1, 3))
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        out = ((yy % py) < p["thick_y"]) | ((xx % px) < p["thick_x"])
    elif kind == "square_checkerboard":
        if "cell" not in p:
            need_gen()
        c = _draw_int(gen, p, "cell")
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        out = ((yy // c + xx // c) % 2) == 1
    elif kind == "circular_checkerboard":
        if "ring_width" not in p:
            need_gen()
        rw = _draw_int(gen, p, "ring_width")
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        r = np.hypot(yy - (h - 1) / 2.0, xx - (w - 1) / 2.0)
        out = (np.floor(r / rw).astype(np.int64) % 2) == 1
    elif kind == "random_squares":
        g = need_gen()
        n = _draw_int(g, p, "count", "square_count")
        side = _draw_int(g, p, "side", "square_side")
        if "positions" not in p:
            p["positions"] = [[int(g.integers(0, max(1, h - side + 1))), int(g.integers(0, max(1, w - side + 1)))]
                              for _ in range(n)]
        out = np.zeros((h, w), dtype=bool)
        for y0, x0 in p["positions"]:
            out[y0:y0 + side, x0:x0 + side] = True
    elif kind == "random_lines":
        g = need_gen()
        n = _draw_int(g, p, "count", "line_count")
        if "segments" not in p:
            p["segments"] = [[float(g.uniform(0, h - 1)), float(g.uniform(0, w - 1)),
                              float(g.uniform(0, h - 1)), float(g.uniform(0, w - 1))] for _ in range(n)]
        out = np.zeros((h, w), dtype=bool)
        for seg in p["segments"]:
            _draw_segment(out, *seg)
    else:  # random_stripes
        if any(key not in p for key in ("period", "angle", "duty")):
            need_gen()
        period = _draw_int(gen, p, "period")
        angle = _draw_float(gen, p, "angle")
        duty = _draw_float(gen, p, "duty")
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        t = np.deg2rad(angle)
        phase = (xx * np.cos(t) + yy * np.sin(t)) / period
        out = (phase - np.floor(phase)) < duty
    return out.astype(np.float64)


def random_pattern_spec(rng) -> PatternSpec:
    gen = as_generator(rng)
    return PatternSpec(PATTERN_KINDS[int(gen.integers(len(PATTERN_KINDS)))])


# ---------------------------------------------------------------------------
# injection
# ---------------------------------------------------------------------------

def _nondc_mean(mag: np.ndarray) -> np.ndarray:
    """Mean magnitude over all bins except DC, per channel."""
    h, w = mag.shape[:2]
    total = mag.sum(axis=(0, 1)) - mag[0, 0]
    return total / max(h * w - 1, 1)


def mix_magnitudes(image_mag: np.ndarray, pattern_mag: np.ndarray, cfg: FreqConfig) -> np.ndarray:
    pm = pattern_mag
    if cfg.magnitude_normalization == "mean_match":
        target = _nondc_mean(image_mag)
        have = _nondc_mean(pm)
        scale = np.where(have > 0, target / np.where(have > 0, have, 1.0), 0.0)
        pm = pm * scale
    mixed = (1.0 - cfg.k) * image_mag + cfg.k * pm
    if cfg.dc_preserve:
        mixed[0, 0] = image_mag[0, 0]
    return mixed


def inject_frequency_artifact(img: np.ndarray, spec: PatternSpec, cfg: FreqConfig, rng=None,
                              *, clamp: bool = True, record: Optional[dict] = None) -> np.ndarray:
    """Superimpose the pattern's magnitude spectrum onto the image, keeping image phase."""
    h, w, c = img.shape
    gen = as_generator(rng) if rng is not None else None
    if cfg.per_channel_pattern:
        specs = [spec] + [PatternSpec(spec.kind) for _ in range(c - 1)]
        pattern = np.stack([gen_pattern(s, h, w, gen) for s in specs], axis=-1)
    else:
        specs = [spec]
        pattern = gen_pattern(spec, h, w, gen)[:, :, None]
    f_img = fft2(img)
    f_pat = fft2(pattern)
    mag = mix_magnitudes(f_img.magnitude(), np.broadcast_to(f_pat.magnitude(), f_img.shape), cfg)
    out = ifft2(SpectrumBuffer.from_polar(mag, f_img.phase()), clamp=clamp)
    if record is not None:
        record.update(pattern=spec.kind, pattern_params=[s.params for s in specs], k=cfg.k)
    return out


def log_magnitude(img: np.ndarray) -> np.ndarray:
    """Centered, channel-averaged ``log(1 + |F|)`` scaled to ``[0, 1]`` by its max."""
    mag = fft2(img).magnitude().mean(axis=2)
    lm = np.fft.fftshift(np.log1p(mag))
    top = lm.max()
    return lm / top if top > 0 else lm
