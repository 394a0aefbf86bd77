import math

import numpy as np
import pytest


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion, print it and fail the test on FAIL."""
    def check(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        request.config.stash[ACCEPTANCE_KEY].append(line)
        print(line)
        assert ok, line
    return check


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(gen, h=24, w=20, c=3):
    return gen.random((h, w, c))


def direct_dft2(x):
    """O(N^2) 2-D DFT by explicit summation over every pixel, one channel."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=np.complex128)
    n = np.arange(h)[:, None]
    m = np.arange(w)[None, :]
    for u in range(h):
        for v in range(w):
            out[u, v] = np.sum(x * np.exp(-2j * math.pi * (u * n / h + v * m / w)))
    return out


def bilinear_reference(img, out_h, out_w):
    """Per-pixel loop: half-pixel centered source coords, clamped neighbours."""
    h, w = img.shape[:2]
    out = np.zeros((out_h, out_w) + img.shape[2:])
    for i in range(out_h):
        for j in range(out_w):
            sy = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
            sx = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[i, j] = ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
                         + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])
    return out


def affine_reference(img, factor):
    """Inverse-map every output pixel through the scaling about the center."""
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            sy = min(max(cy + (i - cy) / factor, 0.0), h - 1.0)
            sx = min(max(cx + (j - cx) / factor, 0.0), w - 1.0)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[i, j] = ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
                         + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])
    return out


def enumerate_rates(att, bf, t):
    """APCER/BPCER at one threshold by direct counting."""
    att, bf = np.asarray(att), np.asarray(bf)
    apcer = int(np.count_nonzero(att < t)) / att.size
    bpcer = int(np.count_nonzero(bf >= t)) / bf.size
    return apcer, bpcer


def brute_force_eer(att, bf):
    """Exhaustive threshold enumeration under the declared conventions."""
    thresholds = [-math.inf] + sorted(set(att) | set(bf)) + [math.inf]
    pts = [(t,) + enumerate_rates(att, bf, t) for t in thresholds]
    best = min(abs(a - b) for _, a, b in pts)
    if best == 0:
        t, a, _ = next(p for p in pts if p[1] - p[2] == 0)  # lowest threshold wins
        return a, t
    last_neg = max(i for i, (_, a, b) in enumerate(pts) if a - b < 0)
    first_pos = min(i for i, (_, a, b) in enumerate(pts) if a - b > 0)
    assert first_pos == last_neg + 1
    (t0, a0, b0), (t1, a1, b1) = pts[last_neg], pts[first_pos]
    d0, d1 = a0 - b0, a1 - b1
    lam = d0 / (d0 - d1)
    rate = a0 + lam * (a1 - a0)
    if math.isinf(t0):
        t = t1
    elif math.isinf(t1):
        t = t0
    else:
        t = t0 + lam * (t1 - t0)
    return rate, t


def brute_force_bpcer(att, bf, target):
    thresholds = [-math.inf] + sorted(set(att) | set(bf)) + [math.inf]
    ok = [t for t in thresholds if enumerate_rates(att, bf, t)[0] <= target]
    t_star = max(ok)
    return enumerate_rates(att, bf, t_star)[1], t_star


def mlp_losses(sizes, P, X, y, eps=1e-12):
    """Mean BCE for each row of the parameter stack ``P`` (c, n); X is already standardized."""
    c = P.shape[0]
    a = np.broadcast_to(X, (c,) + X.shape)
    pos = 0
    n_layers = len(sizes) - 1
    for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = P[:, pos:pos + fi * fo].reshape(c, fi, fo)
        pos += fi * fo
        b = P[:, pos:pos + fo]
        pos += fo
        z = a @ W + b[:, None, :]
        a = np.where(z > 0, z, 0.01 * z) if i < n_layers - 1 else z
    p = np.clip(1.0 / (1.0 + np.exp(-a[:, :, 0])), eps, 1 - eps)
    return -(y * np.log(p) + (1 - y) * np.log(1 - p)).mean(axis=1)


def fd_gradient(sizes, params, X, y, h=1e-5, chunk=512):
    """Central finite differences of the mean BCE over every coordinate."""
    n = params.size
    out = np.empty(n)
    for s in range(0, n, chunk):
        idx = np.arange(s, min(n, s + chunk))
        up = np.repeat(params[None], idx.size, axis=0)
        dn = up.copy()
        up[np.arange(idx.size), idx] += h
        dn[np.arange(idx.size), idx] -= h
        out[idx] = (mlp_losses(sizes, up, X, y) - mlp_losses(sizes, dn, X, y)) / (2 * h)
    return out


# |a - n| / max(|a|, |n|, floor): below the floor the comparison is absolute,
# since central differences carry ~1e-10 of round-off
REL_FLOOR = 1e-6


def max_rel_error(a, n):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)))


def gradient_case(gen, sizes=None, batch=6):
    """Random model/batch with every hidden pre-activation away from the leaky-ReLU kink."""
    from selfmad import detector as D

    sizes = D.LAYER_SIZES if sizes is None else sizes
    while True:
        model = D.init_model(int(gen.integers(2**32)), sizes)
        model = model.with_params(model.params + gen.normal(0, 0.05, model.params.size))
        X = gen.normal(0, 1, (batch, sizes[0]))
        y = gen.integers(0, 2, batch).astype(float)
        pre, _ = D._forward_cache(model, X)
        if all(np.abs(z).min() > 1e-4 for z in pre[:-1]):
            return model, X, y
