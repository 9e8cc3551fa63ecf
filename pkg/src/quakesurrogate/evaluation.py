"""Accuracy metrics, summary statistics and exceedance curves."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import DegenerateError, DomainError, ShapeError
from .signals import ResponseHistory

RESPONSE_TYPES = ("accel", "IDR", "vel", "disp", "force")


@dataclass(frozen=True)
class CorrelationRecord:
    sample_id: str
    response_type: str
    r: float
    floor_index: Optional[int] = None

    def __post_init__(self):
        if self.response_type not in RESPONSE_TYPES:
            raise DomainError(f"unknown response type {self.response_type!r}")
        if not abs(self.r) <= 1.0 + 1e-12:
            raise DomainError(f"correlation {self.r} outside [-1, 1]")


def correlation(y, y_hat) -> float:
    """Pearson correlation of two equal-length series."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ShapeError("correlation needs two 1-D series of equal length")
    if y.size < 2:
        raise DomainError("correlation needs at least two samples")
    a = y - y.mean()
    b = y_hat - y_hat.mean()
    va = float(a @ a)
    vb = float(b @ b)
    if va == 0.0 or vb == 0.0:
        raise DegenerateError("correlation of a constant series is undefined")
    r = float(a @ b) / math.sqrt(va * vb)
    return min(1.0, max(-1.0, r))


def correlations(true: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Row-wise correlation over the last axis, e.g. ``(N, F, T) -> (N, F)``."""
    true = np.asarray(true, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if true.shape != pred.shape:
        raise ShapeError("true and predicted arrays differ in shape")
    out = np.empty(true.shape[:-1])
    for idx in np.ndindex(out.shape):
        out[idx] = correlation(true[idx], pred[idx])
    return out


def avg_correlation(records: Sequence[CorrelationRecord], n_floors: int) -> float:
    """Mean of one sample's per-floor correlations; every floor must be present."""
    floors = sorted(r.floor_index for r in records)
    if floors != list(range(n_floors)):
        missing = sorted(set(range(n_floors)) - set(f for f in floors if f is not None))
        raise DomainError(f"need exactly one record per floor; missing {missing}")
    return float(np.mean([r.r for r in records]))


def percentile_exemplars(values, levels=(5, 50, 95)) -> List[int]:
    """Index of the nearest-rank percentile value for each level.

    The rank is ``ceil(p * n / 100)`` (at least 1). When several entries
    share the selected value the lowest index is returned.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DomainError("percentile_exemplars needs at least one value")
    order = np.argsort(v, kind="stable")
    n = v.size
    out = []
    for p in levels:
        k = min(n, max(1, math.ceil(p * n / 100.0)))
        val = v[order[k - 1]]
        out.append(int(np.flatnonzero(v == val)[0]))
    return out


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: List[float] = field(default_factory=list)

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def box_stats(values) -> BoxStats:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DomainError("box_stats needs at least one value")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    outliers = sorted(float(x) for x in v[(v < lo) | (v > hi)])
    return BoxStats(float(med), float(q1), float(q3), float(inside.min()), float(inside.max()),
                    outliers)


def peak_edp(history: ResponseHistory, ground_accel=None, absolute: bool = False) -> Dict[str, np.ndarray]:
    """Per-floor peak floor acceleration and peak inter-story drift ratio.

    The acceleration is relative to the ground unless ``absolute`` is set, in
    which case ``ground_accel`` is added first.
    """
    acc = history.rel_accel
    if absolute:
        if ground_accel is None:
            raise DomainError("absolute accelerations need the ground acceleration")
        acc = acc + np.asarray(ground_accel, dtype=np.float64)[None, :]
    out = {"pfa": np.max(np.abs(acc), axis=-1)}
    if history.idr is not None:
        out["idr"] = np.max(np.abs(history.idr), axis=-1)
    return out


@dataclass(frozen=True)
class ExceedanceCurve:
    thresholds: np.ndarray
    probabilities: np.ndarray


def exceedance_curve(per_window_peaks: Sequence[Optional[float]], thresholds) -> ExceedanceCurve:
    """Fraction of windows whose peak strictly exceeds each threshold.

    ``None`` (or NaN) marks a window without events; it never exceeds.
    """
    n = len(per_window_peaks)
    if n < 1:
        raise DomainError("need at least one hazard window")
    x = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
    if x.size == 0:
        raise DomainError("thresholds must not be empty")
    peaks = np.array([-np.inf if p is None else float(p) for p in per_window_peaks])
    peaks[np.isnan(peaks)] = -np.inf
    srt = np.sort(peaks)
    # count of peaks > x via the right insertion point
    counts = n - np.searchsorted(srt, x, side="right")
    return ExceedanceCurve(x, counts / n)


def window_maxima(window_index: Iterable[int], peaks: Iterable[float],
                  n_windows: int) -> List[Optional[float]]:
    """Largest peak per hazard window (None where the window had no events)."""
    out: List[Optional[float]] = [None] * n_windows
    for w, p in zip(window_index, peaks):
        if out[w] is None or p > out[w]:
            out[w] = float(p)
    return out


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
