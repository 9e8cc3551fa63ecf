"""Nonlinear time-history analysis of the SDOF source model and the shear building."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from ..errors import DomainError, ModelError, SolverError
from ..signals import ResponseHistory, Waveform
from .kernels import get_backend

NEWTON_MAX_ITER = 50
NEWTON_RTOL = 1e-10
BETA = 0.25
GAMMA = 0.5

# reference result of the published calibration against the 20-story frame
DEFAULT_SDOF = dict(mass_kg=1.0, period_s=2.41, damping_ratio=0.032,
                  yield_force_N=4.33, post_yield_ratio=0.370)


@dataclass(frozen=True)
class SDOFParams:
    mass_kg: float = 1.0
    period_s: float = 2.41
    damping_ratio: float = 0.032
    yield_force_N: float = 4.33
    post_yield_ratio: float = 0.370

    def __post_init__(self):
        for name in ("mass_kg", "period_s", "yield_force_N"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")
        if not self.damping_ratio >= 0:
            raise ModelError("damping_ratio must be non-negative")
        if not 0.0 <= self.post_yield_ratio <= 1.0:
            raise ModelError("post_yield_ratio must be in [0, 1]")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.period_s

    @property
    def stiffness(self) -> float:
        return self.mass_kg * self.omega ** 2

    @property
    def damping_coeff(self) -> float:
        return 2.0 * self.damping_ratio * self.mass_kg * self.omega

    @property
    def yield_disp(self) -> float:
        return self.yield_force_N / self.stiffness


@dataclass(frozen=True)
class ShearBuildingParams:
    """Planar shear building; story ``j`` connects floor ``j-1`` (ground) to floor ``j``."""

    masses: Tuple[float, ...]
    story_heights_m: Tuple[float, ...]
    elastic_story_stiffness: Tuple[float, ...]
    story_yield_force_N: Tuple[float, ...]
    post_yield_ratio: Tuple[float, ...]
    rayleigh_modes: Tuple[int, int] = (1, 2)
    rayleigh_zetas: Tuple[float, float] = (0.03, 0.03)

    def __post_init__(self):
        n = len(self.masses)
        for name in ("story_heights_m", "elastic_story_stiffness",
                     "story_yield_force_N", "post_yield_ratio"):
            if len(getattr(self, name)) != n:
                raise ModelError(f"{name} must have one entry per story ({n})")
        if n < 1:
            raise ModelError("need at least one story")
        for name in ("masses", "story_heights_m", "elastic_story_stiffness",
                     "story_yield_force_N"):
            if not all(x > 0 for x in getattr(self, name)):
                raise ModelError(f"{name} must be positive")
        if not all(0.0 <= x <= 1.0 for x in self.post_yield_ratio):
            raise ModelError("post_yield_ratio must be in [0, 1]")

    @property
    def n_stories(self) -> int:
        return len(self.masses)

    def mass_matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.masses, dtype=np.float64))

    def stiffness_matrix(self) -> np.ndarray:
        k = np.asarray(self.elastic_story_stiffness, dtype=np.float64)
        n = k.size
        K = np.zeros((n, n))
        for j in range(n):
            K[j, j] += k[j]
            if j > 0:
                K[j - 1, j - 1] += k[j]
                K[j - 1, j] -= k[j]
                K[j, j - 1] -= k[j]
        return K


def default_building(n_stories: int = 20, floor_mass_kg: float = 5.0e5,
                     story_height_m: float = 4.0, roof_stiffness_fraction: float = 0.4,
                     yield_drift: float = 0.01, post_yield_ratio: float = 0.1,
                     target_T1: Optional[float] = 2.40) -> ShearBuildingParams:
    """Uniform-mass building with stiffness tapering linearly to the roof.

    Yield force of each story corresponds to ``yield_drift`` of its height.
    With ``target_T1`` set the stiffnesses are scaled to that fundamental period.
    """
    if n_stories == 1:
        profile = np.ones(1)
    else:
        profile = np.linspace(1.0, roof_stiffness_fraction, n_stories)
    k = 1.0e8 * profile
    h = np.full(n_stories, story_height_m)
    params = ShearBuildingParams(
        masses=tuple([floor_mass_kg] * n_stories),
        story_heights_m=tuple(h),
        elastic_story_stiffness=tuple(k),
        story_yield_force_N=tuple(k * yield_drift * h),
        post_yield_ratio=tuple([post_yield_ratio] * n_stories),
    )
    if target_T1 is not None:
        params = tune_building(target_T1, params)
    return params


def _validate_input(gm: Waveform):
    if not isinstance(gm, Waveform):
        raise DomainError("ground motion must be a Waveform")


def _tolerance(yield_force: float, load_scale: float) -> float:
    """Absolute residual tolerance: a fraction of the yield force, or of the
    load scale when the spring cannot yield within it."""
    ref = yield_force if math.isfinite(yield_force) else 0.0
    return NEWTON_RTOL * min(ref, load_scale) if ref > 0 and load_scale > 0 else \
        NEWTON_RTOL * max(ref, load_scale)


def newmark_sdof(params: SDOFParams, gm: Waveform, u0: float = 0.0, v0: float = 0.0,
                 backend=None) -> ResponseHistory:
    """Average-acceleration Newmark with Newton iteration on the bilinear spring."""
    _validate_input(gm)
    kern = get_backend(backend)
    ag = np.ascontiguousarray(gm.samples, dtype=np.float64)
    m = params.mass_kg
    peak = m * float(np.max(np.abs(ag))) if ag.size else 0.0
    peak += params.stiffness * abs(u0) + params.damping_coeff * abs(v0) + m * abs(v0) / gm.dt_s
    tol = _tolerance(params.yield_force_N, peak)
    u, v, a, f, status = kern.sdof_newmark(
        ag, gm.dt_s, m, params.damping_coeff, params.stiffness, params.yield_force_N,
        params.post_yield_ratio, float(u0), float(v0), BETA, GAMMA, tol, NEWTON_MAX_ITER)
    if status >= 0:
        raise SolverError(f"Newton iteration did not converge at step {status}", step=status)
    return ResponseHistory(rel_accel=a[None, :], rel_vel=v[None, :], rel_disp=u[None, :],
                           restoring_force=f[None, :], dt_s=gm.dt_s, id=gm.id)


def eigen_analysis(params: ShearBuildingParams, return_modes: bool = False):
    """Natural periods (descending) from the generalized problem ``K phi = w^2 M phi``."""
    K = params.stiffness_matrix()
    M = params.mass_matrix()
    try:
        w2, phi = linalg.eigh(K, M)
    except linalg.LinAlgError as exc:
        raise ModelError(f"stiffness matrix is not positive definite: {exc}") from exc
    if np.any(w2 <= 0):
        raise ModelError("stiffness matrix is not positive definite")
    periods = 2.0 * math.pi / np.sqrt(w2)
    if return_modes:
        return periods, phi
    return periods


def rayleigh_coefficients(omega1: float, omega2: float, zeta1: float, zeta2: float):
    """Mass and stiffness factors ``(a0, a1)`` giving ratios zeta_i at omega_i."""
    if not (omega1 > 0 and omega2 > 0):
        raise DomainError("frequencies must be positive")
    A = np.array([[0.5 / omega1, 0.5 * omega1], [0.5 / omega2, 0.5 * omega2]])
    if omega1 == omega2 or abs(np.linalg.det(A)) < 1e-14 * np.abs(A).max() ** 2:
        raise DomainError("Rayleigh damping needs two distinct frequencies")
    a0, a1 = np.linalg.solve(A, [zeta1, zeta2])
    return float(a0), float(a1)


def building_rayleigh(params: ShearBuildingParams):
    periods = eigen_analysis(params)
    omegas = 2.0 * math.pi / periods
    z1, z2 = params.rayleigh_zetas
    if params.n_stories == 1:
        # one mode only: stiffness-proportional damping reproduces an SDOF dashpot
        return 0.0, 2.0 * z1 / omegas[0]
    i, j = params.rayleigh_modes
    return rayleigh_coefficients(omegas[i - 1], omegas[j - 1], z1, z2)


def tune_building(target_T1: float, template: ShearBuildingParams,
                  preserve_yield_drift: bool = True) -> ShearBuildingParams:
    """Scale all story stiffnesses uniformly so the first period equals ``target_T1``.

    Periods scale with ``1/sqrt(stiffness)``, so one scaling is exact. Yield
    forces follow the stiffness by default to keep the yield drifts.
    """
    if not target_T1 > 0:
        raise DomainError("target period must be positive")
    T1 = eigen_analysis(template)[0]
    s = (T1 / target_T1) ** 2
    k = tuple(float(x) * s for x in template.elastic_story_stiffness)
    fy = template.story_yield_force_N
    if preserve_yield_drift:
        fy = tuple(float(x) * s for x in fy)
    return replace(template, elastic_story_stiffness=k, story_yield_force_N=fy)


def newmark_mdof(params: ShearBuildingParams, gm: Waveform, backend=None) -> ResponseHistory:
    """Shear-building response; ``rel_accel``/``rel_vel``/``rel_disp`` are per floor,
    ``restoring_force`` per story shear and ``idr`` per story."""
    _validate_input(gm)
    kern = get_backend(backend)
    a0, a1 = building_rayleigh(params)
    ag = np.ascontiguousarray(gm.samples, dtype=np.float64)
    mass = np.asarray(params.masses, dtype=np.float64)
    k = np.asarray(params.elastic_story_stiffness, dtype=np.float64)
    fy = np.asarray(params.story_yield_force_N, dtype=np.float64)
    r = np.asarray(params.post_yield_ratio, dtype=np.float64)
    peak = float(mass.max() * np.max(np.abs(ag))) if ag.size else 0.0
    tol = _tolerance(float(fy.min()), peak)
    U, V, A, F, status = kern.mdof_newmark(ag, gm.dt_s, mass, k, fy, r, a0, a1,
                                           BETA, GAMMA, tol, NEWTON_MAX_ITER)
    if status >= 0:
        raise SolverError(f"Newton iteration did not converge at step {status}", step=status)
    U = U.T.copy()
    below = np.vstack([np.zeros((1, U.shape[1])), U[:-1]])
    h = np.asarray(params.story_heights_m, dtype=np.float64)[:, None]
    idr = (U - below) / h
    return ResponseHistory(rel_accel=A.T.copy(), rel_vel=V.T.copy(), rel_disp=U,
                           restoring_force=F.T.copy(), dt_s=gm.dt_s, idr=idr, id=gm.id)


def top_floor_displacement(params: ShearBuildingParams, gm: Waveform, backend=None) -> np.ndarray:
    return newmark_mdof(params, gm, backend=backend).rel_disp[-1]


def sdof_equivalent(params: ShearBuildingParams) -> SDOFParams:
    """SDOF with the same mass, stiffness and damping as a one-story building."""
    if params.n_stories != 1:
        raise ModelError("only a one-story building has an exact SDOF equivalent")
    m = params.masses[0]
    k = params.elastic_story_stiffness[0]
    return SDOFParams(mass_kg=m, period_s=2.0 * math.pi * math.sqrt(m / k),
                      damping_ratio=params.rayleigh_zetas[0],
                      yield_force_N=params.story_yield_force_N[0],
                      post_yield_ratio=params.post_yield_ratio[0])


@dataclass
class BilinearState:
    displacement_m: float = 0.0
    force_N: float = 0.0
    back_force_N: float = 0.0


def bilinear_force(state: BilinearState, new_disp: float, k0: float, f_y: float,
                   r_post: float, backend=None):
    """Kinematic-hardening bilinear spring; returns ``(force, new_state)``."""
    kern = get_backend(backend)
    f, back, _ = kern.bilinear_update(float(new_disp), state.displacement_m, state.force_N,
                                      state.back_force_N, k0, f_y, r_post)
    return f, BilinearState(float(new_disp), f, back)
