"""Waveform and response containers, intensity measures and dataset scaling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateError, DomainError

SDOF_CHANNELS = ("rel_accel", "rel_vel", "rel_disp", "restoring_force")


@dataclass
class Waveform:
    """Uniformly sampled ground acceleration (m/s^2)."""

    samples: np.ndarray
    dt_s: float
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DomainError("waveform samples must be one-dimensional")
        if not self.dt_s > 0:
            raise DomainError(f"dt_s must be positive, got {self.dt_s}")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError(f"waveform {self.id!r} has non-finite samples")

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_steps * self.dt_s

    def scaled(self, factor: float) -> "Waveform":
        return Waveform(self.samples * factor, self.dt_s, self.id)


@dataclass
class ResponseHistory:
    """Relative response of a structure, arrays shaped ``(n_dof, n_steps)``.

    ``restoring_force`` holds the spring force for an SDOF model and the
    story shear of each story for a shear building. ``idr`` is only set for
    multi-story models.
    """

    rel_accel: np.ndarray
    rel_vel: np.ndarray
    rel_disp: np.ndarray
    restoring_force: np.ndarray
    dt_s: float
    idr: Optional[np.ndarray] = None
    id: str = ""

    @property
    def n_steps(self) -> int:
        return self.rel_disp.shape[-1]

    @property
    def n_dof(self) -> int:
        return self.rel_disp.shape[0]

    def channel(self, name: str) -> np.ndarray:
        arr = getattr(self, name)
        if arr is None:
            raise DomainError(f"response history has no {name!r} channel")
        return arr

    def sdof_channels(self) -> np.ndarray:
        """Stack the four SDOF channels into a ``(4, n_steps)`` array."""
        return np.stack([self.channel(c)[0] for c in SDOF_CHANNELS])


@dataclass(frozen=True)
class IntensityMeasures:
    pga: float
    pgv: float


def _check_nonempty(w: Waveform):
    if w.samples.size == 0:
        raise DomainError("empty waveform")


def compute_pga(w: Waveform) -> float:
    _check_nonempty(w)
    return float(np.max(np.abs(w.samples)))


def velocity(w: Waveform) -> np.ndarray:
    """Trapezoidal integral of the acceleration, starting from rest."""
    a = w.samples
    v = np.zeros_like(a)
    if a.size > 1:
        v[1:] = np.cumsum(0.5 * (a[1:] + a[:-1]) * w.dt_s)
    return v


def compute_pgv(w: Waveform) -> float:
    # no baseline correction: the synthesizer envelope keeps means near zero
    _check_nonempty(w)
    return float(np.max(np.abs(velocity(w))))


def intensity_measures(w: Waveform) -> IntensityMeasures:
    return IntensityMeasures(compute_pga(w), compute_pgv(w))


@dataclass
class NormalizationStats:
    input_scale: float
    response_scales: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.input_scale > 0:
            raise DegenerateError("input scale must be positive")
        for name, s in self.response_scales.items():
            if not s > 0:
                raise DegenerateError(f"response scale for {name!r} must be positive")

    def normalize_input(self, x):
        return np.asarray(x, dtype=np.float64) / self.input_scale

    def denormalize_input(self, x):
        return np.asarray(x, dtype=np.float64) * self.input_scale

    def normalize(self, family: str, y):
        return np.asarray(y, dtype=np.float64) / self.response_scales[family]

    def denormalize(self, family: str, y):
        return np.asarray(y, dtype=np.float64) * self.response_scales[family]

    def to_dict(self) -> dict:
        # floats round-trip exactly through json via repr
        return {"input_scale": float(self.input_scale),
                "response_scales": {k: float(v) for k, v in self.response_scales.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(float(d["input_scale"]),
                   {k: float(v) for k, v in d["response_scales"].items()})


def _global_max_abs(arrays: Iterable[np.ndarray]) -> float:
    peak = 0.0
    for a in arrays:
        a = np.asarray(a)
        if a.size:
            peak = max(peak, float(np.max(np.abs(a))))
    return peak


def fit_normalization(inputs: Sequence[Waveform],
                      responses: Sequence[ResponseHistory],
                      families: Sequence[str] = SDOF_CHANNELS,
                      extra_inputs: Sequence[Waveform] = ()) -> NormalizationStats:
    """Dataset-global max-abs scaling.

    Each response family gets one scale taken over every sample and every
    degree of freedom. ``extra_inputs`` widens the input scale, which is how
    target datasets share the input scale of the source dataset.
    """
    if not inputs or not responses:
        raise DomainError("fit_normalization needs non-empty inputs and responses")
    input_scale = _global_max_abs([w.samples for w in list(inputs) + list(extra_inputs)])
    if input_scale == 0.0:
        raise DegenerateError("all input waveforms are zero")
    scales = {}
    for fam in families:
        s = _global_max_abs(r.channel(fam) for r in responses)
        if s == 0.0:
            raise DegenerateError(f"response family {fam!r} is identically zero")
        scales[fam] = s
    return NormalizationStats(input_scale, scales)


def apply_normalization(stats: NormalizationStats, inputs: Sequence[Waveform],
                        responses: Sequence[ResponseHistory]):
    """Return the normalized ``(inputs, responses)`` as new containers."""
    new_in = [Waveform(stats.normalize_input(w.samples), w.dt_s, w.id) for w in inputs]
    new_out = []
    for r in responses:
        kw = {}
        for name in ("rel_accel", "rel_vel", "rel_disp", "restoring_force", "idr"):
            arr = getattr(r, name)
            if arr is not None and name in stats.response_scales:
                arr = stats.normalize(name, arr)
            kw[name] = arr
        new_out.append(ResponseHistory(dt_s=r.dt_s, id=r.id, **kw))
    return new_in, new_out
