"""Image buffers, raster codecs, crop/resize geometry and seeded RNG streams.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` with ``float64``
values in ``[0, 1]``.  Single-channel rasters (patterns, masks, segmentation
maps) are ``(H, W)`` arrays.  All geometry uses continuous coordinates with
pixel centers at integer indices (the "half-pixel centered" convention).
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

Label = Union[str, int]

MIN_SIDE = 8


class ImageFormatError(ValueError):
    """Raised for unsupported, truncated or empty raster files."""


# ---------------------------------------------------------------------------
# buffers
# ---------------------------------------------------------------------------

def as_image(data, *, min_side: int = 1) -> np.ndarray:
    """Validate ``data`` as an ImageBuffer and return it as float64 ``(H, W, C)``."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1|3) image, got shape {arr.shape}")
    if arr.shape[0] < min_side or arr.shape[1] < min_side:
        raise ValueError(f"image {arr.shape[:2]} smaller than {min_side}x{min_side}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


def clamp01(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0.0, 1.0)


def round_half_up(x):
    """Round-half-up used wherever a continuous quantity becomes a pixel count."""
    r = np.floor(np.asarray(x, dtype=np.float64) + 0.5)
    return int(r) if r.ndim == 0 else r.astype(np.int64)


# ---------------------------------------------------------------------------
# codecs
# ---------------------------------------------------------------------------

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated header")
    return buf[start:pos], pos


def decode_pnm(buf: bytes) -> np.ndarray:
    """Decode binary P6 (RGB) or P5 (gray) into an 8-bit array."""
    magic = buf[:2]
    if magic not in (b"P6", b"P5"):
        raise ImageFormatError(f"unsupported PNM magic {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise ImageFormatError(f"bad header field {tok!r}") from exc
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ImageFormatError("zero-sized image")
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit rasters supported (maxval={maxval})")
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = buf[pos:pos + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated pixel data: {len(payload)} of {need} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return arr.copy()


def encode_pnm(arr8: np.ndarray) -> bytes:
    if arr8.ndim == 2:
        arr8 = arr8[:, :, None]
    h, w, c = arr8.shape
    magic = {3: b"P6", 1: b"P5"}[c]
    header = magic + b"\n%d %d\n255\n" % (w, h)
    return header + np.ascontiguousarray(arr8, dtype=np.uint8).tobytes()


def _decode_png(buf: bytes) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(io.BytesIO(buf)) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"cannot decode PNG: {exc}") from exc
    if arr.size == 0:
        raise ImageFormatError("zero-sized image")
    return arr if arr.ndim == 3 else arr[:, :, None]


def read_raster8(path) -> np.ndarray:
    """Read a P5/P6/PNG file as a raw ``uint8`` ``(H, W, C)`` array."""
    path = Path(path)
    buf = path.read_bytes()
    if not buf:
        raise ImageFormatError(f"{path}: empty file")
    if buf[:2] in (b"P5", b"P6"):
        return decode_pnm(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(buf)
    raise ImageFormatError(f"{path}: unsupported raster format")


def write_raster8(arr8: np.ndarray, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        a = arr8[:, :, 0] if arr8.ndim == 3 and arr8.shape[2] == 1 else arr8
        Image.fromarray(np.ascontiguousarray(a, dtype=np.uint8)).save(path, format="PNG")
    else:
        path.write_bytes(encode_pnm(arr8))


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Load an 8-bit raster and scale it to ``[0, 1]`` by ``v / 255``."""
    return read_raster8(path).astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Store ``round_half_up(v * 255)`` clamped to ``[0, 255]``.

    ``.png`` paths go through Pillow; everything else is written as binary
    PNM (P6 for RGB, P5 for single channel).
    """
    write_raster8(to_uint8(as_image(img)), path)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundingBox:
    x0: int
    y0: int
    side: int

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("bounding box side must be positive")


def full_box(img: np.ndarray) -> BoundingBox:
    """Largest centered square; used when an image has no bounding-box entry."""
    h, w = img.shape[:2]
    side = min(h, w)
    return BoundingBox((w - side) // 2, (h - side) // 2, side)


def margin_region(shape: Sequence[int], box: BoundingBox, margin: float) -> tuple[int, int, int, int]:
    """Return ``(y0, y1, x0, x1)`` of the centered, enlarged, clipped crop."""
    if not 0.0 <= margin <= 0.5:
        raise ValueError(f"margin {margin} outside [0, 0.5]")
    h, w = shape[:2]
    if box.x0 < 0 or box.y0 < 0 or box.x0 + box.side > w or box.y0 + box.side > h:
        raise ValueError(f"box {box} outside image {w}x{h}")
    new_side = round_half_up(box.side * (1.0 + margin))
    cx = box.x0 + box.side / 2.0
    cy = box.y0 + box.side / 2.0
    x0 = round_half_up(cx - new_side / 2.0)
    y0 = round_half_up(cy - new_side / 2.0)
    x1, y1 = x0 + new_side, y0 + new_side
    return max(0, y0), min(h, y1), max(0, x0), min(w, x1)


def crop_with_margin(img: np.ndarray, box: BoundingBox, margin: float) -> np.ndarray:
    y0, y1, x0, x1 = margin_region(img.shape, box, margin)
    return img[y0:y1, x0:x1].copy()


def sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear sampling at continuous coordinates with edge replication.

    ``ys``/``xs`` are arrays of the output grid shape; works for 2-D and 3-D
    ``img``.  Interpolation is written as ``a + t * (b - a)`` so that equal
    neighbours reproduce their value bit-exactly.
    """
    h, w = img.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = ys - y0
    tx = xs - x0
    if img.ndim == 3:
        ty = ty[..., None]
        tx = tx[..., None]
    top = img[y0, x0] + tx * (img[y0, x1] - img[y0, x0])
    bot = img[y1, x0] + tx * (img[y1, x1] - img[y1, x0])
    return top + ty * (bot - top)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    sy = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    sx = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys, xs = np.meshgrid(sy, sx, indexing="ij")
    return sample_bilinear(img, ys, xs)


def resize_nearest(labels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resize for class-index maps (same center convention)."""
    h, w = labels.shape[:2]
    iy = np.clip(np.floor((np.arange(out_h) + 0.5) * (h / out_h)), 0, h - 1).astype(np.intp)
    ix = np.clip(np.floor((np.arange(out_w) + 0.5) * (w / out_w)), 0, w - 1).astype(np.intp)
    return labels[iy][:, ix]


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------

def _label_word(label: Label) -> int:
    if isinstance(label, bool) or not isinstance(label, (int, str)):
        raise TypeError(f"stream labels must be str or int, got {type(label).__name__}")
    if isinstance(label, int):
        if label < 0:
            raise ValueError("integer stream labels must be non-negative")
        # tag ints and strings apart so 7 and "7" never collide
        return (label << 1) & ((1 << 128) - 1)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return (int.from_bytes(digest[:15], "little") << 1) | 1


@dataclass(frozen=True)
class RngStream:
    """Counter-style stream: the draw sequence depends only on ``(seed, path)``."""

    seed: int
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for lab in self.path:
            _label_word(lab)

    def child(self, label: Label) -> "RngStream":
        return RngStream(self.seed, self.path + (label,))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=tuple(_label_word(l) for l in self.path))

    def generator(self) -> np.random.Generator:
        """A fresh PCG64 generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def state_words(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.seed_sequence().generate_state(4, np.uint64))


def rng_substream(parent: RngStream, label: Label) -> RngStream:
    return parent.child(label)


def params_digest(params) -> str:
    """sha256 over canonical JSON of drawn parameters."""
    import json

    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")



def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream (fresh generator at stream start) or a live Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
