"""Spectral/residual feature extractor and a small MLP trained with SGD + SAM.

The network uses leaky-ReLU hidden units and a logistic output; gradients
are derived by hand for a flat parameter vector laid out as
``W1, b1, W2, b2, ...`` with each ``W`` stored ``(fan_in, fan_out)``
row-major.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .imgcore import RngStream

N_RADIAL = 64
N_RESIDUAL = 16
# geometric interior edges; bin 0 holds |r| < 1/1024, the last bin is open-ended
RESIDUAL_EDGES = np.geomspace(1.0 / 1024.0, 0.25, N_RESIDUAL - 1)
N_FEATURES = N_RADIAL + N_RESIDUAL + 6
LAYER_SIZES = (N_FEATURES, 64, 32, 1)

LEAK = 0.01
EPS = 1e-12
MAGIC = b"SMAD"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def radial_log_power(img: np.ndarray, n_bins: int = N_RADIAL) -> np.ndarray:
    """Mean ``log(1 + power)`` over equal-width rings of normalised radius, DC excluded."""
    h, w = img.shape[:2]
    spec = np.fft.fft2(img, axes=(0, 1))
    power = (np.abs(spec) ** 2).mean(axis=2) / (h * w)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.hypot(fy, fx)
    r_max = np.hypot(0.5, 0.5)
    idx = np.minimum((r / r_max * n_bins).astype(np.intp), n_bins - 1)
    keep = r > 0
    sums = np.bincount(idx[keep], weights=power[keep], minlength=n_bins)
    counts = np.bincount(idx[keep], minlength=n_bins)
    mean = np.divide(sums, counts, out=np.zeros(n_bins), where=counts > 0)
    return np.log1p(mean)


def highpass_residual(img: np.ndarray) -> np.ndarray:
    """``img - box3x3(img)`` per channel with edge replication."""
    return img - uniform_filter(img, size=(3, 3, 1), mode="nearest")


def residual_histogram(img: np.ndarray) -> np.ndarray:
    mag = np.abs(highpass_residual(img)).ravel()
    idx = np.searchsorted(RESIDUAL_EDGES, mag, side="right")
    return np.bincount(idx, minlength=N_RESIDUAL) / mag.size


def extract_features(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"feature extraction needs an (H, W, 3) image, got {img.shape}")
    moments = np.concatenate([img.mean(axis=(0, 1)), img.var(axis=(0, 1))])
    return np.concatenate([radial_log_power(img), residual_histogram(img), moments])


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def param_count(sizes: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass
class DetectorModel:
    layer_sizes: tuple
    params: np.ndarray
    feature_mean: Optional[np.ndarray] = None
    feature_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (param_count(self.layer_sizes),):
            raise ValueError("parameter vector does not match layer sizes")
        n_in = self.layer_sizes[0]
        if self.feature_mean is None:
            self.feature_mean = np.zeros(n_in)
        if self.feature_scale is None:
            self.feature_scale = np.ones(n_in)
        self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64)
        self.feature_scale = np.asarray(self.feature_scale, dtype=np.float64)

    def layers(self, params: Optional[np.ndarray] = None):
        """Yield ``(W, b)`` views into ``params`` (defaults to the model's own)."""
        flat = self.params if params is None else params
        out, pos = [], 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = flat[pos:pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, flat[pos:pos + b]))
            pos += b
        return out

    def with_params(self, params: np.ndarray) -> "DetectorModel":
        return DetectorModel(self.layer_sizes, params, self.feature_mean, self.feature_scale)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.feature_mean) / self.feature_scale


def init_model(seed: int = 0, layer_sizes: Sequence[int] = LAYER_SIZES) -> DetectorModel:
    """Uniform ``+-sqrt(6 / (fan_in + fan_out))`` weights, zero biases."""
    gen = RngStream(seed, ("detector", "init")).generator()
    chunks = []
    for a, b in zip(layer_sizes[:-1], layer_sizes[1:]):
        lim = np.sqrt(6.0 / (a + b))
        chunks.append(gen.uniform(-lim, lim, size=a * b))
        chunks.append(np.zeros(b))
    return DetectorModel(tuple(layer_sizes), np.concatenate(chunks))


def fit_standardizer(model: DetectorModel, X: np.ndarray) -> DetectorModel:
    std = X.std(axis=0)
    scale = np.where(std > 1e-8, std, 1.0)
    return DetectorModel(model.layer_sizes, model.params.copy(), X.mean(axis=0), scale)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def _leaky(z):
    return np.where(z > 0, z, LEAK * z)


def _forward_cache(model: DetectorModel, X: np.ndarray, params=None):
    acts = [model.standardize(np.atleast_2d(X))]
    pre = []
    layers = model.layers(params)
    for i, (W, b) in enumerate(layers):
        z = acts[-1] @ W + b
        pre.append(z)
        acts.append(_leaky(z) if i < len(layers) - 1 else z)
    return pre, acts


def forward(model: DetectorModel, x: np.ndarray) -> np.ndarray | float:
    """Attack probability for one feature vector (float) or a batch (array)."""
    x = np.asarray(x, dtype=np.float64)
    _, acts = _forward_cache(model, x)
    p = sigmoid(acts[-1][:, 0])
    return float(p[0]) if x.ndim == 1 else p


def bce_loss(p, y):
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(loss) if loss.ndim == 0 else loss


def batch_loss(model: DetectorModel, X, y, params=None) -> float:
    _, acts = _forward_cache(model, X, params)
    return float(np.mean(bce_loss(sigmoid(acts[-1][:, 0]), y)))


def backward(model: DetectorModel, X: np.ndarray, y: np.ndarray, params=None) -> tuple[float, np.ndarray]:
    """Mean BCE over the batch and its exact gradient w.r.t. the flat parameters."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    n = X.shape[0]
    pre, acts = _forward_cache(model, X, params)
    p_raw = sigmoid(acts[-1][:, 0])
    loss = float(np.mean(bce_loss(p_raw, y)))
    live = (p_raw > EPS) & (p_raw < 1.0 - EPS)  # clamp kills the gradient
    delta = np.where(live, p_raw - y, 0.0)[:, None] / n
    layers = model.layers(params)
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append(delta.sum(axis=0))
        grads.append((acts[i].T @ delta).ravel())
        if i > 0:
            delta = (delta @ W.T) * np.where(pre[i - 1] > 0, 1.0, LEAK)
    return loss, np.concatenate(grads[::-1])


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    sam_rho: float = 0.05
    batch_size: int = 32
    epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.sam_rho < 0:
            raise ValueError("sam_rho must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


@dataclass
class OptimizerState:
    velocity: Optional[np.ndarray] = None


def sgd_momentum_step(model: DetectorModel, grad: np.ndarray, state: OptimizerState,
                      cfg: TrainConfig) -> DetectorModel:
    """``v <- momentum * v + grad``; ``w <- w - lr * v``.  Updates ``state`` in place."""
    if state.velocity is None:
        state.velocity = np.zeros_like(model.params)
    if state.velocity.shape != grad.shape or grad.shape != model.params.shape:
        raise ValueError("gradient/velocity shape mismatch")
    state.velocity = cfg.momentum * state.velocity + grad
    return model.with_params(model.params - cfg.learning_rate * state.velocity)


def sam_step(model: DetectorModel, X, y, state: OptimizerState, cfg: TrainConfig) -> tuple[DetectorModel, float]:
    """Two-step sharpness-aware update; returns the new model and the loss at the original weights."""
    loss, g1 = backward(model, X, y)
    eps = cfg.sam_rho * g1 / (np.linalg.norm(g1) + 1e-12)
    _, g2 = backward(model, X, y, params=model.params + eps)
    return sgd_momentum_step(model, g2, state, cfg), loss


def train(model: DetectorModel, X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> tuple[DetectorModel, list]:
    """Seeded mini-batch training; returns the final model and per-epoch mean loss."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both labels")
    n = len(y)
    state = OptimizerState()
    shuffle_root = RngStream(cfg.seed, ("detector", "shuffle"))
    trace = []
    for epoch in range(cfg.epochs):
        order = shuffle_root.child(epoch).generator().permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            model, loss = sam_step(model, X[idx], y[idx], state, cfg)
            total += loss * len(idx)
        trace.append(total / n)
    return model, trace


def predict_score(model: DetectorModel, img: np.ndarray) -> float:
    return forward(model, extract_features(img))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def model_to_bytes(model: DetectorModel) -> bytes:
    """``SMAD`` | u32 version | u32 n_sizes | u32 sizes... | f64 params | f64 mean | f64 scale."""
    head = MAGIC + struct.pack("<II", FORMAT_VERSION, len(model.layer_sizes))
    head += struct.pack(f"<{len(model.layer_sizes)}I", *model.layer_sizes)
    body = np.concatenate([model.params, model.feature_mean, model.feature_scale]).astype("<f8")
    return head + body.tobytes()


def model_from_bytes(buf: bytes) -> DetectorModel:
    if buf[:4] != MAGIC:
        raise ValueError("not a detector model file (bad magic)")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    sizes = struct.unpack_from(f"<{n}I", buf, 12)
    off = 12 + 4 * n
    n_params = param_count(sizes)
    need = n_params + 2 * sizes[0]
    vals = np.frombuffer(buf, dtype="<f8", offset=off)
    if vals.size != need:
        raise ValueError(f"model file holds {vals.size} values, expected {need}")
    vals = vals.astype(np.float64)
    return DetectorModel(sizes, vals[:n_params], vals[n_params:n_params + sizes[0]], vals[n_params + sizes[0]:])


def save_model(model: DetectorModel, path, meta: Optional[dict] = None) -> None:
    path = Path(path)
    path.write_bytes(model_to_bytes(model))
    side = {"format": "SMAD", "version": FORMAT_VERSION, "layer_sizes": list(model.layer_sizes),
            "param_count": int(model.params.size)}
    side.update(meta or {})
    path.with_name(path.name + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def load_model(path) -> DetectorModel:
    return model_from_bytes(Path(path).read_bytes())
