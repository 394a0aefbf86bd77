import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from selfmad.cli import main
from selfmad.config import ConfigError, load_config
from selfmad.faces import write_corpus
from selfmad.imgcore import load_image, save_image, write_raster8

FAST = ["--set", "preprocessing.target_size=64", "--set", "pixelgen.reference_size=64"]
TRAIN_FAST = ["--set", "detector.epochs=15", "--set", "detector.batch_size=8", "--set", "detector.learning_rate=0.01"]


def synth(inp, out, *extra, seg=True, seed=3):
    args = ["synth", str(inp), str(out), "--seed", str(seed), *FAST, *extra]
    if seg:
        args += ["--seg-dir", str(inp), "--bbox-file", str(Path(inp) / "bboxes.jsonl")]
    return main(args)


def manifest_lines(out):
    return [json.loads(l) for l in (Path(out) / "manifest.jsonl").read_text().splitlines() if l.strip()]


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("faces")
    write_corpus(d, 6, seed=1, size=80)
    return d


@pytest.fixture(scope="module")
def pipeline(corpus, tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    assert synth(corpus, root / "synth") == 0
    man = root / "synth" / "manifest.jsonl"
    assert main(["train", str(man), str(root / "m.smad"), "--split", "all", *TRAIN_FAST]) == 0
    assert main(["eval", str(man), str(root / "m.smad"), str(root / "report.json")]) == 0
    return root


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["detector.learnig_rate=0.1"])
        with pytest.raises(ConfigError):
            load_config(overrides=["bogus.x=1"])

    def test_overrides_apply(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"freqgen": {"k": 0.2}, "seed": 5}))
        cfg = load_config(p, ["detector.epochs=7"], seed=9)
        assert cfg.freqgen.k == 0.2 and cfg.detector.epochs == 7 and cfg.seed == 9

    def test_digest_tracks_content(self):
        assert load_config().digest() == load_config().digest()
        assert load_config().digest() != load_config(overrides=["freqgen.k=0.3"]).digest()


class TestSynth:
    def test_four_records_per_source(self, pipeline):
        recs = manifest_lines(pipeline / "synth")
        assert len(recs) == 4 * 6
        assert sum(r["label"] == 0 for r in recs) == 12 and sum(r["label"] == 1 for r in recs) == 12
        assert {r["stage"] for r in recs} == {"OS", "AS", "MS", "FMS"}
        for r in recs:
            img = load_image(pipeline / "synth" / r["path"])
            assert img.shape == (64, 64, 3)

    def test_parts_masks_used(self, pipeline):
        ms = [r for r in manifest_lines(pipeline / "synth") if r["stage"] == "MS"]
        assert all(r["mask_mode"] == "parts" for r in ms)

    def test_deterministic_bytes(self, corpus, pipeline, tmp_path):
        assert synth(corpus, tmp_path / "again") == 0
        assert tree_bytes(tmp_path / "again") == tree_bytes(pipeline / "synth")

    def test_seed_changes_output(self, corpus, pipeline, tmp_path):
        assert synth(corpus, tmp_path / "other", seed=4) == 0
        assert tree_bytes(tmp_path / "other") != tree_bytes(pipeline / "synth")

    def test_without_segmentation_full_masks(self, corpus, tmp_path):
        assert synth(corpus, tmp_path / "noseg", seg=False) == 0
        ms = [r for r in manifest_lines(tmp_path / "noseg") if r["stage"] == "MS"]
        assert ms and all(r["mask_mode"] == "full" for r in ms)

    def test_dump_spectra(self, corpus, tmp_path):
        assert synth(corpus, tmp_path / "spec", "--dump-spectra") == 0
        assert len(list((tmp_path / "spec").rglob("*spectrum*.pgm"))) == 6

    def test_seg_size_mismatch_is_data_error(self, corpus, tmp_path):
        inp = tmp_path / "in"
        shutil.copytree(corpus, inp)
        write_raster8(np.zeros((10, 10, 1), np.uint8), inp / "face_0000.seg.png")
        assert synth(inp, tmp_path / "out") == 3

    def test_empty_input_is_data_error(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["synth", str(tmp_path / "empty"), str(tmp_path / "out")]) == 3

    def test_corrupt_image_is_data_error(self, tmp_path):
        (tmp_path / "in").mkdir()
        (tmp_path / "in" / "x.ppm").write_bytes(b"P6\n4 4\n255\n\x00")
        assert main(["synth", str(tmp_path / "in"), str(tmp_path / "out")]) == 3

    def test_bad_config_is_usage_error(self, corpus, tmp_path):
        assert main(["synth", str(corpus), str(tmp_path / "o"), "--set", "freqgen.k=2.0"]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["synth", str(corpus), str(tmp_path / "o"), "--config", str(bad)]) == 2

    def test_thread_count_does_not_change_output(self, corpus, tmp_path, monkeypatch):
        monkeypatch.setenv("SELFMAD_THREADS", "1")
        assert synth(corpus, tmp_path / "t1") == 0
        monkeypatch.setenv("SELFMAD_THREADS", "8")
        assert synth(corpus, tmp_path / "t8") == 0
        assert tree_bytes(tmp_path / "t1") == tree_bytes(tmp_path / "t8")


class TestTrainEval:
    def test_trace(self, pipeline):
        trace = json.loads((pipeline / "m.smad.trace.json").read_text())["epoch_mean_loss"]
        assert len(trace) == 15
        assert all(np.isfinite(trace)) and trace[-1] < trace[0]

    def test_model_files(self, pipeline):
        assert (pipeline / "m.smad").read_bytes()[:4] == b"SMAD"
        meta = json.loads((pipeline / "m.smad.json").read_text())
        assert meta["n_samples"] == 24

    def test_retrain_identical_bytes(self, pipeline, tmp_path):
        man = pipeline / "synth" / "manifest.jsonl"
        assert main(["train", str(man), str(tmp_path / "m2.smad"), "--split", "all", *TRAIN_FAST]) == 0
        assert (tmp_path / "m2.smad").read_bytes() == (pipeline / "m.smad").read_bytes()

    def test_rho_zero_matches_sgd_config(self, pipeline, tmp_path):
        man = pipeline / "synth" / "manifest.jsonl"
        args = ["--split", "all", "--set", "detector.epochs=3"]
        assert main(["train", str(man), str(tmp_path / "a.smad"), *args, "--set", "detector.sam_rho=0"]) == 0
        assert main(["train", str(man), str(tmp_path / "b.smad"), *args, "--set", "detector.sam_rho=0.0"]) == 0
        assert (tmp_path / "a.smad").read_bytes() == (tmp_path / "b.smad").read_bytes()
        assert main(["train", str(man), str(tmp_path / "c.smad"), *args]) == 0
        assert (tmp_path / "c.smad").read_bytes() != (tmp_path / "a.smad").read_bytes()

    def test_scores_cover_manifest(self, pipeline):
        lines = (pipeline / "report.scores.jsonl").read_text().splitlines()
        assert len(lines) == 24
        assert all(0.0 < json.loads(l)["score"] < 1.0 for l in lines)

    def test_report_deterministic(self, pipeline, tmp_path):
        man = pipeline / "synth" / "manifest.jsonl"
        assert main(["eval", str(man), str(pipeline / "m.smad"), str(tmp_path / "r.json")]) == 0
        assert (tmp_path / "r.json").read_bytes() == (pipeline / "report.json").read_bytes()

    def test_fits_training_data(self, pipeline):
        rep = json.loads((pipeline / "report.json").read_text())
        assert float(rep["eer"]) < 0.5
        assert rep["counts"] == {"bona_fide": 12, "attack": 12}
        assert rep["meta"]["split"] == "all"

    def test_missing_model_is_io_error(self, pipeline, tmp_path):
        man = pipeline / "synth" / "manifest.jsonl"
        assert main(["eval", str(man), str(tmp_path / "none.smad"), str(tmp_path / "r.json")]) == 4

    def test_corrupt_model_is_data_error(self, pipeline, tmp_path):
        man = pipeline / "synth" / "manifest.jsonl"
        (tmp_path / "bad.smad").write_bytes(b"XXXX" + b"\x00" * 32)
        assert main(["eval", str(man), str(tmp_path / "bad.smad"), str(tmp_path / "r.json")]) == 3

    def test_empty_split_is_data_error(self, pipeline, tmp_path):
        man = pipeline / "synth" / "manifest.jsonl"
        assert main(["eval", str(man), str(pipeline / "m.smad"), str(tmp_path / "r.json"), "--split", "nope"]) == 3


class TestInspect:
    def test_constant_image(self, tmp_path):
        save_image(np.full((16, 16, 3), 0.5), tmp_path / "c.ppm")
        assert main(["inspect", str(tmp_path / "c.ppm"), str(tmp_path / "c")]) == 0
        spec = load_image(tmp_path / "c.spectrum.pgm")[:, :, 0]
        hot = np.argwhere(spec > 0)
        assert hot.tolist() == [[8, 8]]  # DC after centring
        assert load_image(tmp_path / "c.residual.pgm").max() == 0.0

    def test_deterministic(self, tmp_path, rng):
        save_image(rng.random((12, 14, 3)), tmp_path / "r.ppm")
        main(["inspect", str(tmp_path / "r.ppm"), str(tmp_path / "a")])
        main(["inspect", str(tmp_path / "r.ppm"), str(tmp_path / "b")])
        for suffix in (".spectrum.pgm", ".residual.pgm"):
            assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()

    def test_stripes_light_up_band(self, tmp_path):
        x = np.arange(32)
        img = np.repeat(np.tile(0.5 + 0.4 * np.cos(2 * np.pi * x / 8), (32, 1))[:, :, None], 3, axis=2)
        save_image(img, tmp_path / "s.ppm")
        main(["inspect", str(tmp_path / "s.ppm"), str(tmp_path / "s")])
        spec = load_image(tmp_path / "s.spectrum.pgm")[:, :, 0].copy()
        spec[16, 16] = 0  # drop DC
        peaks = {tuple(p) for p in np.argwhere(spec == spec.max())}
        assert peaks == {(16, 12), (16, 20)}

    def test_missing_image_is_io_error(self, tmp_path):
        assert main(["inspect", str(tmp_path / "nope.ppm"), str(tmp_path / "x")]) == 4
