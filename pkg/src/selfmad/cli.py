"""Command-line entry point: ``selfmad {synth,train,eval,inspect}``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import detector, metrics
from .config import ConfigError, DataError, PipelineConfig, load_config
from .freqgen import log_magnitude
from .imgcore import ImageFormatError, load_image, save_image
from .synth import ordered_map, read_manifest, record_path, run_synth

EXIT_USAGE, EXIT_DATA, EXIT_IO = 2, 3, 4

log = logging.getLogger("selfmad")


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _features_for(manifest_path, records) -> np.ndarray:
    def one(r):
        img = load_image(record_path(manifest_path, r))
        if img.shape[2] == 1:
            img = np.repeat(img, 3, axis=2)
        return detector.extract_features(img)

    return np.stack(ordered_map(one, records))


def _select(records, split):
    if split in (None, "all"):
        return records
    chosen = [r for r in records if r.get("split", "train") == split]
    if not chosen:
        raise DataError(f"manifest has no records in split {split!r}")
    return chosen


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(input_dir, out_dir, cfg: PipelineConfig, seg_dir=None, bbox_file=None, dump_spectra=False):
    records = run_synth(input_dir, out_dir, cfg, seg_dir=seg_dir, bbox_file=bbox_file, dump_spectra=dump_spectra)
    log.info("wrote %d records to %s", len(records), Path(out_dir) / "manifest.jsonl")
    return records


def cmd_train(manifest, cfg: PipelineConfig, model_out, split="train", trace_out=None):
    records = _select(read_manifest(manifest), split)
    y = np.array([r["label"] for r in records], dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise DataError("training manifest must contain both labels")
    X = _features_for(manifest, records)
    tcfg = cfg.detector
    model = detector.fit_standardizer(detector.init_model(tcfg.seed), X)
    model, trace = detector.train(model, X, y, tcfg)
    if not all(np.isfinite(trace)):
        raise DataError("training diverged (non-finite loss)")
    meta = {
        "config_digest": cfg.digest(),
        "train_config": json.loads(json.dumps(cfg.to_dict()["detector"])),
        "manifest_sha256": _sha256_file(manifest),
        "n_samples": len(records),
    }
    detector.save_model(model, model_out, meta)
    trace_out = Path(trace_out) if trace_out else Path(str(model_out) + ".trace.json")
    trace_out.write_text(json.dumps({"epoch_mean_loss": [float(v) for v in trace]}, indent=2) + "\n")
    log.info("trained on %d samples: loss %.4f -> %.4f", len(records), trace[0], trace[-1])
    return model, trace


def cmd_eval(manifest, model_path, report_out, split=None, scores_out=None):
    records = _select(read_manifest(manifest), split)
    try:
        model = detector.load_model(model_path)
    except ValueError as exc:
        raise DataError(f"{model_path}: {exc}") from exc
    if model.layer_sizes[0] != detector.N_FEATURES:
        raise DataError(f"model expects {model.layer_sizes[0]} features, extractor gives {detector.N_FEATURES}")
    X = _features_for(manifest, records)
    p = detector.forward(model, X)
    scored = [metrics.ScoreRecord(float(s), metrics.ATTACK if r["label"] == 1 else metrics.BONA_FIDE, r["path"])
              for r, s in zip(records, p)]
    report_out = Path(report_out)
    scores_out = Path(scores_out) if scores_out else report_out.with_suffix(".scores.jsonl")
    metrics.write_scores(scored, scores_out)
    report = metrics.evaluate(scored)
    report.meta.update(model_sha256=_sha256_file(model_path), manifest_sha256=_sha256_file(manifest),
                       split=split or "all")
    metrics.write_report(report, report_out)
    log.info("EER %.4f, BPCER@APCER5%% %.4f, BPCER@APCER10%% %.4f", report.eer,
             report.bpcer_at_apcer[0.05][0], report.bpcer_at_apcer[0.10][0])
    return report


def cmd_inspect(image, out_prefix):
    from .detector import highpass_residual

    img = load_image(image)
    save_image(log_magnitude(img), f"{out_prefix}.spectrum.pgm")
    res = np.abs(highpass_residual(img)).mean(axis=2)
    top = res.max()
    save_image(res / top if top > 0 else res, f"{out_prefix}.residual.pgm")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfmad", description="Self-supervised morphing-attack detection toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")

    p = sub.add_parser("synth", help="synthesize OS/AS/MS/FMS training quadruples")
    p.add_argument("input_dir")
    p.add_argument("out_dir")
    p.add_argument("--seg-dir", help="directory with <stem>.seg.png maps")
    p.add_argument("--bbox-file", help="JSONL bounding-box sidecar")
    p.add_argument("--holdout", type=float, help="fraction of source images held out for testing")
    p.add_argument("--dump-spectra", action="store_true", help="write log-magnitude PGMs for FMS images")
    common(p)

    p = sub.add_parser("train", help="train the detector on a manifest")
    p.add_argument("manifest")
    p.add_argument("model_out")
    p.add_argument("--split", default="train", help="manifest split to train on ('all' for every record)")
    p.add_argument("--trace-out", help="loss trace JSON (default: <model_out>.trace.json)")
    common(p)

    p = sub.add_parser("eval", help="score a manifest and write a metrics report")
    p.add_argument("manifest")
    p.add_argument("model")
    p.add_argument("report_out")
    p.add_argument("--split", default=None, help="restrict to one split (default: all records)")
    p.add_argument("--scores-out", help="JSONL scores (default: <report_out>.scores.jsonl)")

    p = sub.add_parser("inspect", help="write spectrum and residual PGMs for one image")
    p.add_argument("image")
    p.add_argument("out_prefix")
    return parser


def _config(args) -> PipelineConfig:
    overrides = list(args.set)
    if getattr(args, "holdout", None) is not None:
        overrides.append(f"preprocessing.holdout={args.holdout}")
    return load_config(args.config, overrides, args.seed)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            cmd_synth(args.input_dir, args.out_dir, _config(args), args.seg_dir, args.bbox_file, args.dump_spectra)
        elif args.command == "train":
            if args.seed is not None:
                args.set.append(f"detector.seed={args.seed}")
            cfg = _config(args)
            cmd_train(args.manifest, cfg, args.model_out, args.split, args.trace_out)
        elif args.command == "eval":
            cmd_eval(args.manifest, args.model, args.report_out, args.split, args.scores_out)
        else:
            cmd_inspect(args.image, args.out_prefix)
    except ConfigError as exc:
        print(f"selfmad: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ImageFormatError) as exc:
        print(f"selfmad: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"selfmad: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
