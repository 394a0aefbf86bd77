"""Dataset synthesis: bona fide image -> (OS, AS, MS, FMS) quadruple plus manifest."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from . import augmenter, freqgen, pixelgen
from .config import DataError, PipelineConfig
from .imgcore import (BoundingBox, RngStream, full_box, load_image, margin_region, params_digest,
                      read_raster8, resize_bilinear, resize_nearest, round_half_up, save_image)

STAGES = ("OS", "AS", "MS", "FMS")
STAGE_LABEL = {"OS": 0, "AS": 0, "MS": 1, "FMS": 1}
IMAGE_SUFFIXES = (".ppm", ".pnm", ".png")


def worker_count() -> int:
    raw = os.environ.get("SELFMAD_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise DataError(f"SELFMAD_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def ordered_map(fn: Callable, items: Iterable, workers: Optional[int] = None) -> list:
    """Map in a thread pool; results always come back in input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------

@dataclass
class SourceImage:
    index: int
    id: str
    path: Path
    seg_path: Optional[Path]
    box: Optional[BoundingBox]
    split: str = "train"


def list_images(input_dir) -> list[Path]:
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise DataError(f"{input_dir} is not a directory")
    files = [p for p in sorted(input_dir.iterdir())
             if p.suffix.lower() in IMAGE_SUFFIXES and ".seg" not in p.suffixes]
    if not files:
        raise DataError(f"no images found in {input_dir}")
    return files


def read_bboxes(path) -> dict[str, BoundingBox]:
    """Sidecar file: one ``{"image", "x0", "y0", "side"}`` JSON object per line."""
    boxes = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                box = BoundingBox(int(d["x0"]), int(d["y0"]), int(d["side"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{n}: bad bounding-box record ({exc})") from exc
            boxes[Path(d["image"]).name] = box
    return boxes


def find_seg(seg_dir, stem: str) -> Optional[Path]:
    if seg_dir is None:
        return None
    for ext in (".seg.png", ".seg.pgm"):
        p = Path(seg_dir) / f"{stem}{ext}"
        if p.exists():
            return p
    return None


def assign_splits(n: int, holdout: float, seed: int) -> list[str]:
    """Split whole source images so that no quadruple straddles train and test."""
    n_test = min(n - 1, round_half_up(holdout * n)) if n > 1 else 0
    order = RngStream(seed, ("split",)).generator().permutation(n)
    splits = ["train"] * n
    for i in order[:n_test]:
        splits[int(i)] = "test"
    return splits


def collect_sources(input_dir, seg_dir=None, bbox_file=None, holdout=0.2, seed=0) -> list[SourceImage]:
    files = list_images(input_dir)
    boxes = read_bboxes(bbox_file) if bbox_file else {}
    splits = assign_splits(len(files), holdout, seed)
    return [SourceImage(i, p.stem, p, find_seg(seg_dir, p.stem), boxes.get(p.name), splits[i])
            for i, p in enumerate(files)]


# ---------------------------------------------------------------------------
# per-image pipeline
# ---------------------------------------------------------------------------

def preprocess(img, seg, box, margin, size):
    if box is None:
        box = full_box(img)
    try:
        y0, y1, x0, x1 = margin_region(img.shape, box, margin)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    crop = resize_bilinear(img[y0:y1, x0:x1], size, size)
    seg_crop = None if seg is None else resize_nearest(seg[y0:y1, x0:x1], size, size)
    return crop, seg_crop


def synthesize(os_img: np.ndarray, seg: Optional[np.ndarray], cfg: PipelineConfig, stream: RngStream):
    """Run augment -> warp/mask/blend -> frequency injection on a preprocessed image.

    Returns ``(images, params)`` with images keyed by stage.
    """
    params: dict = {}
    aug_p: dict = {}
    as_img = augmenter.augment(os_img, cfg.augmenter, stream.child("augment"), record=aug_p)
    params["augment"] = aug_p

    geo_p: dict = {}
    warped = pixelgen.geo_transform(as_img, cfg.pixelgen, stream.child("geo"), record=geo_p)
    mask_p: dict = {}
    mode = "parts" if seg is not None else "full"
    mask = pixelgen.make_mask(seg, mode, stream.child("mask"), shape=os_img.shape[:2],
                              dilate_radius=cfg.pixelgen.dilate_radius,
                              k_choices=cfg.pixelgen.parts_k_choices, record=mask_p)
    a = pixelgen.sample_blend_factor(stream.child("blend"))
    ms_img = pixelgen.blend(os_img, warped, mask, a)
    params["geo"] = geo_p
    params["mask"] = mask_p
    params["blend_factor"] = a

    pat_stream = stream.child("pattern")
    gen = pat_stream.generator()
    spec = freqgen.random_pattern_spec(gen)
    freq_p: dict = {}
    fms_img = freqgen.inject_frequency_artifact(ms_img, spec, cfg.freqgen, gen, record=freq_p)
    params["freq"] = freq_p
    return {"OS": os_img, "AS": as_img, "MS": ms_img, "FMS": fms_img}, params


def process_source(src: SourceImage, cfg: PipelineConfig, out_dir: Path, dump_spectra: bool = False) -> list[dict]:
    img = load_image(src.path)
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    if min(img.shape[:2]) < 8:
        raise DataError(f"{src.path}: image smaller than 8x8")
    seg = None
    if src.seg_path is not None:
        seg = read_raster8(src.seg_path)[:, :, 0]
        if seg.shape != img.shape[:2]:
            raise DataError(f"{src.seg_path}: segmentation {seg.shape} does not match image {img.shape[:2]}")
    stream = RngStream(cfg.seed, (src.index,))
    pp = cfg.preprocessing
    if src.split == "train":
        margin = float(stream.child("preprocess").generator().uniform(*pp.train_margin_range))
    else:
        margin = pp.test_margin
    os_img, seg_c = preprocess(img, seg, src.box, margin, pp.target_size)
    images, params = synthesize(os_img, seg_c, cfg, stream)

    image_dir = out_dir / "images"
    mask_mode = params["mask"]["mask_mode"]
    cumulative = {"margin": margin, "mask_mode": mask_mode}
    stage_keys = {"OS": (), "AS": ("augment",), "MS": ("geo", "mask", "blend_factor"), "FMS": ("freq",)}
    records = []
    for stage in STAGES:
        for key in stage_keys[stage]:
            cumulative[key] = params[key]
        rel = Path("images") / f"{src.id}_{stage}.ppm"
        save_image(images[stage], out_dir / rel)
        if dump_spectra and stage == "FMS":
            save_image(freqgen.log_magnitude(images[stage]), image_dir / f"{src.id}_{stage}.spectrum.pgm")
        records.append({
            "path": rel.as_posix(),
            "label": STAGE_LABEL[stage],
            "stage": stage,
            "source": src.id,
            "split": src.split,
            "seed_path": [cfg.seed, src.index, stage],
            "mask_mode": mask_mode,
            "digest": params_digest(cumulative),
            "params": json.loads(json.dumps(cumulative, default=_np_default)),
        })
    return records


def _np_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def run_synth(input_dir, out_dir, cfg: PipelineConfig, seg_dir=None, bbox_file=None,
              dump_spectra: bool = False) -> list[dict]:
    out_dir = Path(out_dir)
    sources = collect_sources(input_dir, seg_dir, bbox_file, cfg.preprocessing.holdout, cfg.seed)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    results = ordered_map(lambda s: process_source(s, cfg, out_dir, dump_spectra), sources)
    digest = cfg.digest()
    records = []
    for recs in results:
        for r in recs:
            r["config_digest"] = digest
            records.append(r)
    (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    write_manifest(records, out_dir / "manifest.jsonl")
    return records


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _check_record(r: dict) -> None:
    stage = r.get("stage")
    if stage not in STAGE_LABEL:
        raise DataError(f"unknown stage {stage!r}")
    if r.get("label") != STAGE_LABEL[stage]:
        raise DataError(f"record {r.get('path')}: stage {stage} requires label {STAGE_LABEL[stage]}")


def write_manifest(records: list[dict], path) -> None:
    for r in records:
        _check_record(r)
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    records = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                r = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n}: invalid JSON") from exc
            _check_record(r)
            records.append(r)
    if not records:
        raise DataError(f"{path}: empty manifest")
    return records


def record_path(manifest_path, record: dict) -> Path:
    p = Path(record["path"])
    return p if p.is_absolute() else Path(manifest_path).parent / p
