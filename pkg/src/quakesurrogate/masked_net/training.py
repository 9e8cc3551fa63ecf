"""Mini-batch training loops for the source and transfer networks."""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..errors import ShapeError, TrainingError
from .losses import LossConfig, source_loss, target_loss
from .network import SourceNetwork, TargetNetwork, iter_params
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None
    optimizer: Optional[Adam] = None

    def rows(self):
        """``(epoch, train_loss, val_loss)`` tuples for progress CSVs."""
        for i, tr in enumerate(self.train_loss):
            va = self.val_loss[i] if i < len(self.val_loss) else math.nan
            yield i, tr, va


def params_checksum(net, prefix: str = "") -> str:
    """SHA-256 over parameter names and bytes, optionally limited to a name prefix."""
    h = hashlib.sha256()
    for name, arr, _ in iter_params(net):
        if name.startswith(prefix):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _masks(net, names):
    out = {}
    for name, _, layer in iter_params(net):
        if name in names and name.endswith(".weight") and hasattr(layer, "mask"):
            out[name] = layer.mask
    return out


def _batches(n: int, batch: int, rng: Optional[np.random.Generator]):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for s in range(0, n, batch):
        yield order[s:s + batch]


def _check_finite(value: float, epoch: int):
    if not math.isfinite(value):
        raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch=epoch)


def predict_source(net: SourceNetwork, x: np.ndarray, batch: int = 64) -> np.ndarray:
    return np.concatenate([net.forward(x[s:s + batch]) for s in range(0, len(x), batch)])


def train_source(net: SourceNetwork, x: np.ndarray, y: np.ndarray, epochs: int = 1000,
                 lr: float = 5e-5, batch: int = 16, seed: int = 0,
                 loss_cfg: LossConfig = LossConfig(), channel_scales: Sequence[float] = None,
                 x_val: np.ndarray = None, y_val: np.ndarray = None,
                 optimizer: Adam = None, start_epoch: int = 0,
                 on_epoch: Callable[[int, float, float], None] = None) -> TrainResult:
    """Adam on the source loss; epoch ``e`` shuffles with ``default_rng([seed, e])``.

    ``on_epoch(epoch, train, val)`` returning True stops training early.
    The recorded training loss of an epoch is the sample-weighted mean of the
    batch losses seen during that epoch.
    """
    if x.ndim != 3 or y.ndim != 3 or len(x) != len(y):
        raise ShapeError("inputs (N, 1, T) and targets (N, 4, T) must pair up")
    loss_cfg.validate()
    params = {name: arr for name, arr, layer in iter_params(net) if layer.trainable}
    opt = optimizer or Adam(params, lr=lr, masks=_masks(net, params))
    res = TrainResult(optimizer=opt)
    for epoch in range(start_epoch, start_epoch + epochs):
        rng = np.random.default_rng([seed, epoch])
        total = 0.0
        for idx in _batches(len(x), batch, rng):
            pred = net.forward(x[idx], keep_cache=True)
            value, g = source_loss(pred, y[idx], epoch, loss_cfg, channel_scales)
            _check_finite(value, epoch)
            _, grads = net.backward(g)
            opt.step(grads)
            total += value * len(idx)
        res.train_loss.append(total / len(x))
        if x_val is not None and len(x_val):
            pv = predict_source(net, x_val)
            vl = source_loss(pv, y_val, epoch, loss_cfg, channel_scales)[0]
            res.val_loss.append(vl)
        va = res.val_loss[-1] if res.val_loss else math.nan
        log.info("source epoch %d train %.6g val %.6g", epoch, res.train_loss[-1], va)
        if on_epoch is not None and on_epoch(epoch, res.train_loss[-1], va) is True:
            break
    return res


def predict_target(net: TargetNetwork, x: np.ndarray, batch: int = 64) -> np.ndarray:
    return np.concatenate([net.forward(x[s:s + batch]) for s in range(0, len(x), batch)])


def train_target(net: TargetNetwork, x: np.ndarray, y: np.ndarray, lr: float = 1e-3,
                 max_epochs: int = 2000, patience: int = 200, batch: int = 16, seed: int = 0,
                 x_val: np.ndarray = None, y_val: np.ndarray = None, delta: float = 1.0,
                 on_epoch: Callable[[int, float, float], None] = None) -> TrainResult:
    """Train only the head; the frozen backbone runs once per motion.

    With validation data the head is restored to its best validation epoch
    and training stops after ``patience`` epochs without improvement.
    """
    if len(x) != len(y):
        raise ShapeError("inputs and targets must pair up")
    feats = predict_source(net.backbone, x) if net.backbone is not None else None
    if feats is None:
        net.features(x)  # raises the missing-backbone error
    fval = predict_source(net.backbone, x_val) if x_val is not None and len(x_val) else None
    heads = {"head.conv": net.conv, "head.masked": net.head}
    params = {f"{ln}.{pn}": arr for ln, layer in heads.items() if layer.trainable
              for pn, arr in layer.params.items()}
    opt = Adam(params, lr=lr, masks={"head.masked.weight": net.head.mask})
    res = TrainResult(optimizer=opt)
    best = math.inf
    best_state = {k: v.copy() for k, v in params.items()}
    stale = 0
    for epoch in range(max_epochs):
        rng = np.random.default_rng([seed, epoch])
        total = 0.0
        for idx in _batches(len(x), batch, rng):
            pred = net.forward_head(feats[idx], keep_cache=True)
            value, g = target_loss(pred, y[idx], delta)
            _check_finite(value, epoch)
            _, grads = net.backward_head(g)
            opt.step(grads)
            total += value * len(idx)
        res.train_loss.append(total / len(x))
        if fval is not None:
            pv = np.concatenate([net.forward_head(fval[s:s + 64]) for s in range(0, len(fval), 64)])
            vl = target_loss(pv, y_val, delta)[0]
            res.val_loss.append(vl)
            if vl < best:
                best, stale, res.best_epoch = vl, 0, epoch
                best_state = {k: v.copy() for k, v in params.items()}
            else:
                stale += 1
        va = res.val_loss[-1] if res.val_loss else math.nan
        if on_epoch is not None and on_epoch(epoch, res.train_loss[-1], va) is True:
            break
        if fval is not None and stale >= patience:
            log.info("early stop at epoch %d (best %d)", epoch, res.best_epoch)
            break
    if fval is not None and res.best_epoch is not None:
        for k, v in best_state.items():
            params[k][...] = v
    return res
