"""Banded (masked) linear layers and the length-preserving convolution head.

All arrays are float64 and shaped ``(batch, channel, time)``. Layers keep
their own parameters in ``params`` (name -> array) and return gradients in a
dict with the same keys, so an optimizer can treat every layer alike.
"""
from __future__ import annotations

import math
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def band_mask(T: int, t_past: int, t_future: int) -> np.ndarray:
    """Boolean ``(T, T)`` mask with ``mask[tau, t]`` true for tau-T_P <= t <= tau+T_F."""
    tau = np.arange(T)[:, None]
    t = np.arange(T)[None, :]
    return (t >= tau - t_past) & (t <= tau + t_future)


class MaskedLinear:
    """Time-varying banded linear map between channel stacks.

    ``y[o, tau] = bias[o, tau] + sum_c sum_{t=tau-T_P}^{tau+T_F} W[o, c, tau, t] x[c, t]``

    Narrow bands keep their weights compactly as ``(out, in, T, J)`` with
    ``J = T_P + T_F + 1`` where entry ``j`` addresses column ``tau - T_P + j``;
    wide bands (``J >= T``) keep the full ``(out, in, T, T)`` matrix. With
    ``channelwise=True`` each channel maps only onto itself (no mixing) and the
    channel axis of the weight has length 1.
    """

    def __init__(self, in_channels: int, out_channels: int, T: int, t_past: int,
                 t_future: int, rng: Optional[np.random.Generator] = None,
                 bias: bool = True, channelwise: bool = False, init: str = "uniform",
                 trainable: bool = True):
        if t_future < 0 or not 0 <= t_past <= T:
            raise ShapeError(f"invalid band T_P={t_past}, T_F={t_future} for T={T}")
        if channelwise and in_channels != out_channels:
            raise ShapeError("channelwise layers need equal in/out channels")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.T = T
        self.t_past = t_past
        self.t_future = t_future
        self.channelwise = channelwise
        self.trainable = trainable
        self.width = t_past + t_future + 1
        self.compact = self.width < T
        wc = 1 if channelwise else in_channels
        if self.compact:
            tau = np.arange(T)[:, None]
            col = tau - t_past + np.arange(self.width)[None, :]
            self.mask = ((col >= 0) & (col < T)).astype(np.float64)
            shape = (out_channels, wc, T, self.width)
        else:
            self.mask = band_mask(T, t_past, t_future).astype(np.float64)
            shape = (out_channels, wc, T, T)
        fan_in = (1 if channelwise else in_channels) * (t_past + t_future + 1)
        if init == "zero":
            w = np.zeros(shape)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            s = math.sqrt(1.0 / fan_in)
            w = rng.uniform(-s, s, size=shape)
        self.params: Dict[str, np.ndarray] = {"weight": w * self.mask}
        if bias:
            self.params["bias"] = np.zeros((out_channels, T))

    # -- parameter helpers -------------------------------------------------
    @property
    def band(self) -> Tuple[int, int]:
        return self.t_past, self.t_future

    def apply_mask(self):
        self.params["weight"] *= self.mask

    def dense_weight(self) -> np.ndarray:
        """Full ``(out, in or 1, T, T)`` weight matrix (zeros outside the band)."""
        w = self.params["weight"]
        if not self.compact:
            return w.copy()
        o, c = w.shape[:2]
        dense = np.zeros((o, c, self.T, self.T))
        tau = np.arange(self.T)
        for j in range(self.width):
            t = tau - self.t_past + j
            ok = (t >= 0) & (t < self.T)
            dense[:, :, tau[ok], t[ok]] = w[:, :, tau[ok], j]
        return dense

    def set_dense_weight(self, dense: np.ndarray):
        if not self.compact:
            self.params["weight"] = dense * self.mask
            return
        w = np.zeros_like(self.params["weight"])
        tau = np.arange(self.T)
        for j in range(self.width):
            t = tau - self.t_past + j
            ok = (t >= 0) & (t < self.T)
            w[:, :, tau[ok], j] = dense[:, :, tau[ok], t[ok]]
        self.params["weight"] = w

    # -- compute -------------------------------------------------------------
    def _check(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_channels or x.shape[2] != self.T:
            raise ShapeError(f"expected input (B, {self.in_channels}, {self.T}), got {x.shape}")

    def _windows(self, x):
        xp = np.pad(x, ((0, 0), (0, 0), (self.t_past, self.t_future)))
        return sliding_window_view(xp, self.width, axis=2)  # (B, C, T, J)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        w = self.params["weight"]
        if self.compact:
            xw = self._windows(x)
            if self.channelwise:
                y = np.einsum("ctj,bctj->bct", w[:, 0], xw)
            else:
                B = x.shape[0]
                # batched over time: (T, O, C*J) @ (T, C*J, B)
                wt = np.ascontiguousarray(w.transpose(2, 0, 1, 3)).reshape(self.T, self.out_channels, -1)
                xt = np.ascontiguousarray(xw.transpose(2, 1, 3, 0)).reshape(self.T, -1, B)
                y = np.matmul(wt, xt).transpose(2, 1, 0)
        else:
            if self.channelwise:
                y = np.einsum("cts,bcs->bct", w[:, 0], x)
            else:
                # one GEMM per (out, in) pair, reduced over inputs
                y = np.matmul(w, x.transpose(1, 2, 0)[None]).sum(axis=1).transpose(2, 0, 1)
        if "bias" in self.params:
            y = y + self.params["bias"]
        return np.ascontiguousarray(y)

    def backward(self, x: np.ndarray, grad_out: np.ndarray, need_input_grad: bool = True):
        """Return ``(grad_x, grads)`` with ``grads`` keyed like ``params``."""
        self._check(x)
        w = self.params["weight"]
        grads = {}
        gx = None
        if self.compact:
            xw = self._windows(x)
            if self.channelwise:
                gw = np.einsum("bct,bctj->ctj", grad_out, xw)[:, None]
                if need_input_grad:
                    gxw = np.einsum("ctj,bct->bctj", w[:, 0], grad_out)
            else:
                B = x.shape[0]
                # contiguous operands keep numpy's batched matmul on BLAS
                xtt = np.ascontiguousarray(xw.transpose(2, 0, 1, 3)).reshape(self.T, B, -1)
                gt = np.ascontiguousarray(grad_out.transpose(2, 1, 0))  # (T, O, B)
                gw = np.matmul(gt, xtt)  # (T, O, C*J)
                gw = gw.reshape(self.T, self.out_channels, self.in_channels, self.width)
                gw = gw.transpose(1, 2, 0, 3)
                if need_input_grad:
                    wtt = np.ascontiguousarray(w.transpose(2, 1, 3, 0)).reshape(self.T, -1, self.out_channels)
                    gxt = np.matmul(wtt, gt)  # (T, C*J, B)
                    gxt = gxt.reshape(self.T, self.in_channels, self.width, B)
                    # scatter the window gradients back onto the padded series
                    gj = np.ascontiguousarray(gxt.transpose(2, 0, 1, 3))  # (J, T, C, B)
                    gxp = np.zeros((self.T + self.width - 1, self.in_channels, B))
                    for j in range(self.width):
                        gxp[j:j + self.T] += gj[j]
                    gx = gxp[self.t_past:self.t_past + self.T].transpose(2, 1, 0)
            if need_input_grad and self.channelwise:
                gxp = np.zeros((x.shape[0], x.shape[1], self.T + self.width - 1))
                for j in range(self.width):
                    gxp[:, :, j:j + self.T] += gxw[:, :, :, j]
                gx = gxp[:, :, self.t_past:self.t_past + self.T]
        else:
            if self.channelwise:
                gw = np.einsum("bct,bcs->cts", grad_out, x)[:, None]
                if need_input_grad:
                    gx = np.einsum("cts,bct->bcs", w[:, 0], grad_out)
            else:
                gt = grad_out.transpose(1, 2, 0)[:, None]  # (O, 1, T, B)
                gw = np.matmul(gt, x.transpose(1, 0, 2)[None])
                if need_input_grad:
                    gx = np.matmul(w.transpose(0, 1, 3, 2), gt).sum(axis=0).transpose(2, 0, 1)
        gw = np.ascontiguousarray(gw)
        gw *= self.mask
        grads["weight"] = gw
        if "bias" in self.params:
            grads["bias"] = grad_out.sum(axis=0)
        if gx is not None:
            gx = np.ascontiguousarray(gx)
        return gx, grads


class ConvHead:
    """Cross-correlation with zero padding that preserves the time length.

    ``y[o, tau] = bias[o] + sum_c sum_j K[o, c, j] x[c, tau + j - pad_left]``.
    The default split ``pad_left = L - 2``, ``pad_right = 1`` lets each output
    see one future step.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 pad_right: int = 1, rng: Optional[np.random.Generator] = None,
                 bias: bool = True, init: str = "uniform", trainable: bool = True):
        if not 0 <= pad_right <= kernel - 1:
            raise ShapeError("pad_right must be in [0, kernel-1]")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad_right = pad_right
        self.pad_left = kernel - 1 - pad_right
        self.trainable = trainable
        if init == "zero":
            k = np.zeros((out_channels, in_channels, kernel))
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            s = math.sqrt(1.0 / (in_channels * kernel))
            k = rng.uniform(-s, s, size=(out_channels, in_channels, kernel))
        self.params: Dict[str, np.ndarray] = {"kernel": k}
        if bias:
            self.params["bias"] = np.zeros(out_channels)

    def _check(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"expected input (B, {self.in_channels}, T), got {x.shape}")

    def _windows(self, x):
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad_left, self.pad_right)))
        return sliding_window_view(xp, self.kernel, axis=2)  # (B, C, T, L)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        y = np.einsum("bctl,ocl->bot", self._windows(x), self.params["kernel"], optimize=True)
        if "bias" in self.params:
            y = y + self.params["bias"][None, :, None]
        return np.ascontiguousarray(y)

    def backward(self, x: np.ndarray, grad_out: np.ndarray, need_input_grad: bool = True):
        self._check(x)
        grads = {"kernel": np.einsum("bot,bctl->ocl", grad_out, self._windows(x), optimize=True)}
        if "bias" in self.params:
            grads["bias"] = grad_out.sum(axis=(0, 2))
        gx = None
        if need_input_grad:
            # x[s] feeds y[tau] with lag j = s - tau + pad_left
            T = x.shape[2]
            gp = np.pad(grad_out, ((0, 0), (0, 0), (self.pad_right, self.pad_left)))
            gw = sliding_window_view(gp, self.kernel, axis=2)  # (B, O, T, L)
            gx = np.einsum("botl,ocl->bct", gw[..., ::-1], self.params["kernel"], optimize=True)
            gx = np.ascontiguousarray(gx[:, :, :T])
        return gx, grads


class Tanh:
    """Odd saturating activation."""

    @staticmethod
    def forward(x):
        return np.tanh(x)

    @staticmethod
    def backward(y, grad_out):
        # expressed through the cached output
        return grad_out * (1.0 - y * y)


class Identity:
    @staticmethod
    def forward(x):
        return x

    @staticmethod
    def backward(y, grad_out):
        return grad_out


ACTIVATIONS = {"tanh": Tanh, "identity": Identity}
