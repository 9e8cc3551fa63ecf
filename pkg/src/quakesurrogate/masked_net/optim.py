"""Adam with in-place updates and band re-projection."""
from __future__ import annotations

from typing import Dict

import numpy as np

from ..errors import ShapeError
from ..solver.kernels import get_backend


class Adam:
    """Bias-corrected Adam over a fixed set of named parameter arrays.

    Parameters are updated in place, so the layers holding them see the new
    values directly. Masked weights are re-zeroed outside their band after
    every step.
    """

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, masks: Dict[str, np.ndarray] = None,
                 backend=None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        # flat full-shape copies so each step reads the mask in one pass
        self.masks = {k: np.ascontiguousarray(np.broadcast_to(mk, params[k].shape)).reshape(-1)
                      for k, mk in (masks or {}).items()}
        self.step_count = 0
        self._kern = get_backend(backend)
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray]):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
            self._kern.adam_update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                                   self.m[name].reshape(-1), self.v[name].reshape(-1),
                                   self.masks.get(name), self.lr, b1, b2, self.eps, c1, c2)

    def state_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "step_count": self.step_count, "m": dict(self.m), "v": dict(self.v)}

    def load_state_dict(self, state: dict):
        for key in ("lr", "beta1", "beta2", "eps", "step_count"):
            setattr(self, key, state[key])
        for name in self.params:
            self.m[name][...] = state["m"][name]
            self.v[name][...] = state["v"][name]
