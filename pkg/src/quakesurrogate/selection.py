"""Farthest-point sampling in PGA-PGV space and the pool partitioning scheme."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DomainError

FULL_TARGET_SIZES = (10, 20, 40, 60, 80, 120)
# replicate study sizes: the N=60 case has no replicate runs
FULL_REPLICATE_SIZES = (10, 20, 40, 80, 120)


@dataclass(frozen=True)
class FeaturePoint:
    pga: float
    pgv: float
    motion_id: str = ""


@dataclass(frozen=True)
class SelectionPlan:
    n_source_train: int = 1200
    n_validation: int = 60
    target_sizes: Tuple[int, ...] = FULL_TARGET_SIZES
    replicate_seeds: Tuple[int, ...] = ()

    def validate(self, pool_size: int):
        if self.n_source_train < 1 or self.n_validation < 1:
            raise ConfigurationError("pool sizes must be positive")
        if self.n_source_train + self.n_validation > pool_size:
            raise ConfigurationError(
                f"pool of {pool_size} motions is too small for "
                f"{self.n_source_train} training + {self.n_validation} validation")
        bad = [n for n in self.target_sizes if not 1 <= n <= self.n_source_train]
        if bad:
            raise ConfigurationError(f"target sizes {bad} exceed the source training pool")
        return self


def features_array(points: Sequence[FeaturePoint]) -> np.ndarray:
    x = np.array([[p.pga, p.pgv] for p in points], dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError("features must be finite and non-negative")
    return x


def standardize(x: np.ndarray) -> np.ndarray:
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return (x - x.mean(axis=0)) / std


def fps_indices(x: np.ndarray, k: int, start: Optional[int] = None) -> np.ndarray:
    """Greedy max-min selection over the rows of ``x``.

    Starts from ``start`` or, if None, the row of largest Euclidean norm.
    Ties go to the lowest index (``np.argmax`` semantics).
    """
    n = x.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"k={k} outside [1, {n}]")
    if start is None:
        start = int(np.argmax(np.einsum("ij,ij->i", x, x)))
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    d2 = np.einsum("ij,ij->i", x - x[start], x - x[start])
    d2[start] = -1.0
    for i in range(1, k):
        nxt = int(np.argmax(d2))
        chosen[i] = nxt
        diff = x - x[nxt]
        np.minimum(d2, np.einsum("ij,ij->i", diff, diff), out=d2)
        d2[chosen[:i + 1]] = -1.0
    return chosen


def select_fps(points: Sequence[FeaturePoint], k: int, standardize_features: bool = True,
               start: Optional[int] = None) -> List[int]:
    x = features_array(points)
    if standardize_features:
        x = standardize(x)
    return fps_indices(x, k, start).tolist()


@dataclass
class Partition:
    source_train: List[int]
    validation: List[int]
    # target_train[N][replicate key] -> pool indices; key is the seed or "fps"
    target_train: Dict[int, Dict[object, List[int]]] = field(default_factory=dict)

    def target(self, n: int, replicate=None) -> List[int]:
        sets = self.target_train[n]
        if replicate is None:
            replicate = next(iter(sets))
        return sets[replicate]


def partition_pools(points: Sequence[FeaturePoint], plan: SelectionPlan,
                    standardize_features: bool = True) -> Partition:
    """Source-training, validation and target-training index sets.

    Validation is selected by FPS only after the source-training motions are
    removed from the pool. Target sets are FPS subsets of the source-training
    set; each replicate seed picks a random starting motion.
    """
    x = features_array(points)
    plan.validate(len(x))
    xs = standardize(x) if standardize_features else x
    source = fps_indices(xs, plan.n_source_train)
    rest = np.setdiff1d(np.arange(len(x)), source)
    xr = standardize(x[rest]) if standardize_features else x[rest]
    validation = rest[fps_indices(xr, plan.n_validation)]
    xt = standardize(x[source]) if standardize_features else x[source]
    targets: Dict[int, Dict[object, List[int]]] = {}
    for n in plan.target_sizes:
        sets = {}
        if plan.replicate_seeds:
            for seed in plan.replicate_seeds:
                st = int(np.random.default_rng(seed).integers(len(source)))
                sets[seed] = source[fps_indices(xt, n, start=st)].tolist()
        else:
            sets["fps"] = source[fps_indices(xt, n)].tolist()
        targets[n] = sets
    return Partition(source.tolist(), validation.tolist(), targets)
