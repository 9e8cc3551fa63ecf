"""Huber-based training losses with their gradients.

Every loss returns ``(value, grad_pred)`` where ``grad_pred`` has the shape of
the prediction. Predictions are ``(batch, channel, time)``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, DegenerateError, ShapeError

log = logging.getLogger(__name__)

# channel order of the source network output
ACC, VEL, DISP, FORCE = range(4)


@dataclass(frozen=True)
class LossConfig:
    huber_delta: float = 1.0
    physics_weight: float = 5.0e-6
    physics_switch_epoch: int = 50
    dt_s: float = 0.02

    def validate(self):
        if not self.huber_delta > 0:
            raise ConfigurationError("huber_delta must be positive")
        if not self.physics_weight >= 0:
            raise ConfigurationError("physics_weight must be non-negative")
        if not self.dt_s > 0:
            raise ConfigurationError("dt_s must be positive")
        return self


def huber_elementwise(e: np.ndarray, delta: float = 1.0) -> np.ndarray:
    a = np.abs(e)
    return np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))


def huber_grad(e: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """Derivative of the elementwise Huber penalty with respect to ``e``."""
    return np.clip(e, -delta, delta)


def huber(y, y_hat, delta: float = 1.0) -> float:
    """Mean Huber penalty of ``y_hat - y``."""
    e = np.asarray(y_hat, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.mean(huber_elementwise(e, delta)))


def physics_loss(v_hat: np.ndarray, d_hat: np.ndarray, dt_s: float, delta: float = 1.0):
    """Mismatch between the running integral of velocity and displacement.

    Inputs are ``(T,)`` or ``(batch, T)``. The integral at step ``T`` sums
    ``v(t) dt`` over ``t <= T``. Returns the mean over samples of the sum over
    time and the gradients ``(grad_v, grad_d)``.
    """
    v = np.asarray(v_hat, dtype=np.float64)
    d = np.asarray(d_hat, dtype=np.float64)
    if v.shape != d.shape:
        raise ShapeError("velocity and displacement must have equal shapes")
    squeeze = v.ndim == 1
    if squeeze:
        v, d = v[None], d[None]
    B = v.shape[0]
    e = np.cumsum(v, axis=-1) * dt_s - d
    value = float(huber_elementwise(e, delta).sum() / B)
    ge = huber_grad(e, delta) / B
    gd = -ge
    # transpose of the running sum is a reversed running sum
    gv = np.cumsum(ge[:, ::-1], axis=-1)[:, ::-1] * dt_s
    if squeeze:
        gv, gd = gv[0], gd[0]
    return value, gv, gd


def _peaks(y_true: np.ndarray) -> np.ndarray:
    return np.max(np.abs(y_true), axis=-1)  # (B, C)


def source_loss(pred: np.ndarray, true: np.ndarray, epoch: int, cfg: LossConfig = LossConfig(),
                channel_scales: Optional[Sequence[float]] = None):
    """Per-sample peak-normalized Huber loss plus the delayed physics term.

    ``channel_scales`` converts each stored channel back to physical units
    (the global normalization factors); the physics residual is expressed in
    units of the sample's displacement peak. Samples with an all-zero channel
    are skipped with a warning.
    """
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 3 or pred.shape[1] != 4:
        raise ShapeError(f"expected matching (B, 4, T) arrays, got {pred.shape}, {true.shape}")
    if pred.shape[0] == 0:
        raise ShapeError("empty batch")
    A = _peaks(true)
    ok = np.all(A > 0, axis=1)
    if not np.all(ok):
        msg = f"skipping {int((~ok).sum())} sample(s) with a zero-peak channel"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        log.warning(msg)
    if not np.any(ok):
        raise DegenerateError("every sample in the batch has a zero-peak channel")
    grad = np.zeros_like(pred)
    p, t, a = pred[ok], true[ok], A[ok][:, :, None]
    e = (p - t) / a
    value = float(np.mean(huber_elementwise(e, cfg.huber_delta)))
    g = huber_grad(e, cfg.huber_delta) / (e.size * a)
    if epoch >= cfg.physics_switch_epoch and cfg.physics_weight > 0:
        s = np.ones(4) if channel_scales is None else np.asarray(channel_scales, dtype=np.float64)
        # velocity rescaled so that its running integral is in displacement-peak units
        ad = a[:, DISP] * s[DISP]
        kv = s[VEL] / ad
        v_n = p[:, VEL] * kv
        d_n = p[:, DISP] / a[:, DISP]
        lp, gv, gd = physics_loss(v_n, d_n, cfg.dt_s, cfg.huber_delta)
        value += cfg.physics_weight * lp
        g[:, VEL] += cfg.physics_weight * gv * kv
        g[:, DISP] += cfg.physics_weight * gd / a[:, DISP]
    grad[ok] = g
    return value, grad


def target_loss(pred: np.ndarray, true: np.ndarray, delta: float = 1.0):
    """Huber loss on floor histories normalized by each true peak."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 3:
        raise ShapeError(f"expected matching (B, F, T) arrays, got {pred.shape}, {true.shape}")
    if pred.shape[0] == 0:
        raise ShapeError("empty batch")
    A = _peaks(true)
    if np.any(A <= 0):
        i, k = np.argwhere(A <= 0)[0]
        raise DegenerateError(f"sample {i}, floor {k} has a zero peak response")
    a = A[:, :, None]
    e = (pred - true) / a
    value = float(np.mean(huber_elementwise(e, delta)))
    return value, huber_grad(e, delta) / (e.size * a)
