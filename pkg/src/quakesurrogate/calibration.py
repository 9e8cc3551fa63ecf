"""Fit the SDOF source model to the building's top-floor displacement."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import CalibrationError, DomainError, QuakeSurrogateError
from .signals import Waveform
from .solver import SDOFParams, newmark_sdof

log = logging.getLogger(__name__)

PARAM_NAMES = ("period_s", "damping_ratio", "yield_force_N", "post_yield_ratio")


def default_bounds(T1: float) -> Dict[str, Tuple[float, float]]:
    return {"period_s": (0.5 * T1, 2.0 * T1), "damping_ratio": (0.005, 0.10),
            "yield_force_N": (0.1, 20.0), "post_yield_ratio": (0.01, 0.9)}


@dataclass
class CalibrationProblem:
    motions: List[Waveform]
    target_disp: List[np.ndarray]
    bounds: Dict[str, Tuple[float, float]]
    mass_kg: float = 1.0

    def __post_init__(self):
        if len(self.motions) != len(self.target_disp) or not self.motions:
            raise DomainError("need one target displacement history per motion")
        for w, y in zip(self.motions, self.target_disp):
            if len(y) != w.n_steps:
                raise DomainError(f"target history for {w.id!r} has the wrong length")
        for name in PARAM_NAMES:
            lo, hi = self.bounds[name]
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise DomainError(f"invalid bounds for {name}: {(lo, hi)}")

    def params_from_vector(self, x) -> SDOFParams:
        return SDOFParams(self.mass_kg, *[float(v) for v in x])


@dataclass(frozen=True)
class Trial:
    params: SDOFParams
    objective_value: float
    index: int = 0
    phase: str = "init"


def objective(params: SDOFParams, motions: Sequence[Waveform],
              target_disp: Sequence[np.ndarray]) -> float:
    """Sum over motions of the mean squared displacement mismatch."""
    total = 0.0
    for w, y_t in zip(motions, target_disp):
        y_s = newmark_sdof(params, w).rel_disp[0]
        if y_s.shape != np.shape(y_t):
            raise DomainError("source and target histories differ in length")
        total += float(np.mean((y_s - np.asarray(y_t)) ** 2))
    return total


@dataclass
class CalibrationResult:
    best: Trial
    trials: List[Trial] = field(default_factory=list)


def optimize(problem: CalibrationProblem, budget: int = 500, seed: int = 0,
             init_fraction: float = 0.4) -> CalibrationResult:
    """Latin-hypercube search followed by Nelder-Mead around the incumbent.

    The search runs in the unit cube mapped onto the bounds (log scale for
    the yield force and damping ratio). Every evaluation counts against
    ``budget``; the best trial over all evaluations is returned.
    """
    if budget < 1:
        raise DomainError("budget must be >= 1")
    lo = np.array([problem.bounds[n][0] for n in PARAM_NAMES], dtype=np.float64)
    hi = np.array([problem.bounds[n][1] for n in PARAM_NAMES], dtype=np.float64)
    logscale = np.array([False, True, True, False])
    llo = np.where(logscale, np.log(np.maximum(lo, 1e-300)), lo)
    lhi = np.where(logscale, np.log(np.maximum(hi, 1e-300)), hi)

    def to_params(z):
        z = np.clip(z, 0.0, 1.0)
        y = llo + z * (lhi - llo)
        return problem.params_from_vector(np.where(logscale, np.exp(y), y))

    trials: List[Trial] = []

    def evaluate(z, phase):
        p = to_params(z)
        try:
            val = objective(p, problem.motions, problem.target_disp)
        except QuakeSurrogateError as exc:
            log.warning("trial %d failed: %s", len(trials), exc)
            val = math.inf
        trials.append(Trial(p, val, len(trials), phase))
        return val

    n_init = max(1, min(budget, int(round(init_fraction * budget))))
    sampler = qmc.LatinHypercube(d=len(PARAM_NAMES), seed=np.random.default_rng(seed))
    for z in sampler.random(n_init):
        evaluate(z, "init")

    remaining = budget - n_init
    if remaining > 0:
        init_vals = np.array([t.objective_value for t in trials])
        z_best = _unit(trials[int(np.argmin(init_vals))].params, llo, lhi, logscale)
        # restart the simplex when it stalls, shrinking its size each time
        scale = 0.1
        while remaining > 0:
            simplex = [z_best] + [np.clip(z_best + scale * e, 0, 1) if z_best @ e + scale <= 1
                                  else np.clip(z_best - scale * e, 0, 1)
                                  for e in np.eye(len(PARAM_NAMES))]
            before = len(trials)

            def f(z):
                if len(trials) - before >= remaining:
                    raise _BudgetExhausted
                return evaluate(z, "refine")

            try:
                minimize(f, z_best, method="Nelder-Mead",
                         options={"initial_simplex": np.array(simplex), "xatol": 1e-6,
                                  "fatol": 0.0, "maxfev": remaining})
            except _BudgetExhausted:
                pass
            used = len(trials) - before
            remaining -= used
            vals = np.array([t.objective_value for t in trials])
            z_best = _unit(trials[int(np.argmin(vals))].params, llo, lhi, logscale)
            scale *= 0.5
            if used == 0 or scale < 1e-6:
                break

    vals = np.array([t.objective_value for t in trials])
    if not np.any(np.isfinite(vals)):
        raise CalibrationError("every calibration trial failed")
    best = trials[int(np.argmin(vals))]
    return CalibrationResult(best, trials)


class _BudgetExhausted(Exception):
    pass


def _unit(params: SDOFParams, llo, lhi, logscale):
    x = np.array([getattr(params, n) for n in PARAM_NAMES], dtype=np.float64)
    y = np.where(logscale, np.log(x), x)
    return np.clip((y - llo) / (lhi - llo), 0.0, 1.0)
