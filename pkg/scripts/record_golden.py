"""Record the frozen golden files used by the test suite.

Run once; the outputs under tests/data/ are committed and never regenerated
as part of testing.
"""
import json
from pathlib import Path

import numpy as np

from selfmad.imgcore import RngStream
from selfmad.pixelgen import elastic_transform

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def grid_image(n=64, period=8):
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    g = (((yy % period) == 0) | ((xx % period) == 0)).astype(np.float64)
    return np.repeat(g[:, :, None], 3, axis=2)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    stream = RngStream(42).child(7).child("pixelgen")
    gen = stream.generator()
    golden = {
        "seed": 42,
        "path": [7, "pixelgen"],
        "uint64": [int(v) for v in gen.integers(0, 2**63, size=16, dtype=np.int64)],
        "uniform": [float(v) for v in gen.random(16)],
    }
    (DATA / "rng_golden.json").write_text(json.dumps(golden, indent=2) + "\n")

    out = elastic_transform(grid_image(), 20.0, 10.0, RngStream(2024, ("elastic",)))
    np.save(DATA / "elastic_golden.npy", out)


if __name__ == "__main__":
    main()
