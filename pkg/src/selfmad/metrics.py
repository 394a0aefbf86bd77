"""APCER/BPCER sweeps, EER and BPCER at fixed APCER.

Conventions: a sample is classified as attack iff ``score >= t``; thresholds
are every distinct score plus ``-inf`` and ``+inf``; ties between equally
good operating points go to the lower threshold.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BONA_FIDE = "bona_fide"
ATTACK = "attack"
DECISION_RULE = "attack iff score >= threshold"
TIE_BREAK = "lower threshold"
APCER_TARGETS = (0.05, 0.10)


@dataclass(frozen=True)
class ScoreRecord:
    score: float
    label: str
    id: str = ""

    def __post_init__(self):
        if self.label not in (BONA_FIDE, ATTACK):
            raise ValueError(f"label must be {BONA_FIDE!r} or {ATTACK!r}, got {self.label!r}")
        if not math.isfinite(self.score):
            raise ValueError("score must be finite")


def _split(records: Iterable) -> tuple[np.ndarray, np.ndarray]:
    """Return (attack scores, bona fide scores) from records or (score, label) pairs."""
    att, bf = [], []
    for r in records:
        score, label = (r.score, r.label) if isinstance(r, ScoreRecord) else (r[0], r[1])
        if label in (ATTACK, 1, True):
            att.append(float(score))
        elif label in (BONA_FIDE, 0, False):
            bf.append(float(score))
        else:
            raise ValueError(f"unknown label {label!r}")
    if not att or not bf:
        raise ValueError("both bona fide and attack samples are required")
    a, b = np.asarray(att), np.asarray(bf)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("scores must be finite")
    return a, b


def roc_points(records) -> list[tuple[float, float, float]]:
    """``(threshold, apcer, bpcer)`` for ``-inf``, every distinct score, ``+inf``."""
    att, bf = _split(records)
    return list(zip(*_sweep(att, bf)))


def _sweep(att: np.ndarray, bf: np.ndarray):
    att_sorted = np.sort(att)
    bf_sorted = np.sort(bf)
    thr = np.concatenate([[-np.inf], np.unique(np.concatenate([att, bf])), [np.inf]])
    # attacks strictly below t; bona fide at or above t
    apcer = np.searchsorted(att_sorted, thr, side="left") / att.size
    bpcer = (bf.size - np.searchsorted(bf_sorted, thr, side="left")) / bf.size
    return thr, apcer, bpcer


def _crossing(thr, apcer, bpcer, i, j):
    """Linear interpolation between sweep points ``i`` and ``j`` where APCER-BPCER changes sign."""
    di = apcer[i] - bpcer[i]
    dj = apcer[j] - bpcer[j]
    lam = di / (di - dj)
    rate = apcer[i] + lam * (apcer[j] - apcer[i])
    t_lo, t_hi = thr[i], thr[j]
    if math.isinf(t_lo):
        t = t_hi
    elif math.isinf(t_hi):
        t = t_lo
    else:
        t = t_lo + lam * (t_hi - t_lo)
    return float(rate), float(t)


def eer(records) -> tuple[float, float]:
    """Equal error rate and its threshold."""
    att, bf = _split(records)
    thr, apcer, bpcer = _sweep(att, bf)
    d = apcer - bpcer
    j = int(np.argmax(d >= 0))  # d runs from -1 at -inf to +1 at +inf
    if d[j] == 0:
        return float(apcer[j]), float(thr[j])
    return _crossing(thr, apcer, bpcer, j - 1, j)


def bpcer_at_apcer(records, target: float) -> tuple[float, float]:
    """BPCER at the largest threshold whose APCER does not exceed ``target``."""
    if not 0.0 < target < 1.0:
        raise ValueError("target APCER must lie in (0, 1)")
    att, bf = _split(records)
    thr, apcer, bpcer = _sweep(att, bf)
    ok = np.nonzero(apcer <= target)[0]
    k = int(ok[-1])
    return float(bpcer[k]), float(thr[k])


@dataclass
class MetricsReport:
    eer: float
    eer_threshold: float
    bpcer_at_apcer: dict = field(default_factory=dict)  # target -> (bpcer, threshold)
    n_bona_fide: int = 0
    n_attack: int = 0
    meta: dict = field(default_factory=dict)


def evaluate(records, targets: Sequence[float] = APCER_TARGETS) -> MetricsReport:
    records = list(records)
    att, bf = _split(records)
    e, t = eer(records)
    ops = {float(tg): bpcer_at_apcer(records, tg) for tg in targets}
    return MetricsReport(e, t, ops, int(bf.size), int(att.size),
                         {"decision_rule": DECISION_RULE, "tie_break": TIE_BREAK})


def _fmt_rate(x: float) -> str:
    return f"{x:.6f}"


def _fmt_thr(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def report_to_json(report: MetricsReport) -> str:
    ops = []
    for target in sorted(report.bpcer_at_apcer):
        b, t = report.bpcer_at_apcer[target]
        ops.append({"apcer_target": _fmt_rate(target), "bpcer": _fmt_rate(b), "threshold": _fmt_thr(t)})
    doc = {
        "eer": _fmt_rate(report.eer),
        "eer_threshold": _fmt_thr(report.eer_threshold),
        "bpcer_at_apcer": ops,
        "counts": {"bona_fide": report.n_bona_fide, "attack": report.n_attack},
        "meta": report.meta,
    }
    return json.dumps(doc, indent=2) + "\n"


def write_report(report: MetricsReport, path) -> None:
    Path(path).write_text(report_to_json(report))


def read_report(path) -> MetricsReport:
    doc = json.loads(Path(path).read_text())
    ops = {float(o["apcer_target"]): (float(o["bpcer"]), float(o["threshold"]))
           for o in doc["bpcer_at_apcer"]}
    return MetricsReport(float(doc["eer"]), float(doc["eer_threshold"]), ops,
                         doc["counts"]["bona_fide"], doc["counts"]["attack"], doc.get("meta", {}))


def read_scores(path) -> list[ScoreRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(ScoreRecord(float(d["score"]), d["label"], str(d.get("id", ""))))
    return out


def write_scores(records: Sequence[ScoreRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "score": r.score, "label": r.label}) + "\n")
