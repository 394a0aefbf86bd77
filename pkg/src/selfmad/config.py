"""Pipeline configuration: one dataclass per section, loaded from JSON."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .augmenter import AugmentConfig
from .detector import TrainConfig
from .freqgen import FreqConfig
from .pixelgen import GeoConfig


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class PreprocessConfig:
    train_margin_range: tuple = (0.04, 0.20)
    test_margin: float = 0.125
    target_size: int = 384
    holdout: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "train_margin_range", tuple(self.train_margin_range))
        lo, hi = self.train_margin_range
        if not 0 <= lo <= hi <= 0.5 or not 0 <= self.test_margin <= 0.5:
            raise ValueError("margins must lie in [0, 0.5]")
        if self.target_size < 8:
            raise ValueError("target_size must be >= 8")
        if not 0 <= self.holdout < 1:
            raise ValueError("holdout must lie in [0, 1)")


SECTIONS = {
    "augmenter": AugmentConfig,
    "pixelgen": GeoConfig,
    "freqgen": FreqConfig,
    "detector": TrainConfig,
    "preprocessing": PreprocessConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    augmenter: AugmentConfig = field(default_factory=AugmentConfig)
    pixelgen: GeoConfig = field(default_factory=GeoConfig)
    freqgen: FreqConfig = field(default_factory=FreqConfig)
    detector: TrainConfig = field(default_factory=TrainConfig)
    preprocessing: PreprocessConfig = field(default_factory=PreprocessConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        out = {name: _plain(dataclasses.asdict(getattr(self, name))) for name in SECTIONS}
        out["seed"] = self.seed
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def config_from_dict(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be an object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        bad = set(section) - allowed
        if bad:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
        try:
            kwargs[name] = cls(**section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {name!r} section: {exc}") from exc
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be a non-negative 64-bit integer")
    return PipelineConfig(seed=seed, **kwargs)


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (value parsed as JSON, else kept as a string)."""
    doc = json.loads(json.dumps(doc))
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside non-object {key!r}")
        node[parts[-1]] = value
    return doc


def load_config(path=None, overrides=None, seed=None) -> PipelineConfig:
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    doc = apply_overrides(doc, overrides)
    if seed is not None:
        doc["seed"] = seed
    return config_from_dict(doc)
