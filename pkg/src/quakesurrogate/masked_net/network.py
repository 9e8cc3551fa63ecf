"""Source network (masked backbone) and the transfer network built on top of it."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ShapeError, StateError
from .layers import ACTIVATIONS, ConvHead, MaskedLinear


@dataclass(frozen=True)
class NetworkConfig:
    T_step: int = 4096
    n_layers: int = 8
    n_single_channel: int = 4
    channels: int = 4
    t_past: int = 512
    t_future: int = 1
    full_past_last: bool = True
    activation: str = "tanh"
    # transfer head
    n_floors: int = 20
    conv_kernel: int = 2048
    conv_pad_right: int = 1
    head_t_past: int = 512
    head_t_future: int = 1
    head_residual: bool = True
    head_init: str = "zero"

    def validate(self):
        if self.n_single_channel >= self.n_layers:
            raise ShapeError("need at least one multi-channel layer")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.conv_kernel > self.T_step * 2:
            raise ShapeError("conv kernel is longer than twice the series")
        return self

    @property
    def source_lookahead(self) -> int:
        return self.n_layers * self.t_future

    @property
    def target_lookahead(self) -> int:
        return self.source_lookahead + self.conv_pad_right + self.head_t_future


class SourceNetwork:
    """Stack of masked layers with residual skips.

    Layer ``l`` computes ``x_{l+1} = skip(x_l) + act(masked_l(x_l))``. The
    skip is the identity when channel counts match and a masked projection
    (same band) at the single- to multi-channel transition. The final layer
    has no activation and, by default, sees every past step.
    """

    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        self.cfg = cfg.validate()
        rng = np.random.default_rng(seed)
        self.layers: List[MaskedLinear] = []
        self.skips: Dict[int, MaskedLinear] = {}
        c_in = 1
        T = cfg.T_step
        for l in range(cfg.n_layers):
            c_out = 1 if l < cfg.n_single_channel else cfg.channels
            last = l == cfg.n_layers - 1
            tp = T if (last and cfg.full_past_last) else cfg.t_past
            self.layers.append(MaskedLinear(c_in, c_out, T, tp, cfg.t_future, rng=rng))
            if c_in != c_out:
                self.skips[l] = MaskedLinear(c_in, c_out, T, tp, cfg.t_future, rng=rng)
            c_in = c_out
        self._act = ACTIVATIONS[cfg.activation]
        self._cache = None

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    def named_layers(self) -> Iterator[Tuple[str, object]]:
        for l, layer in enumerate(self.layers):
            yield f"layer{l + 1}", layer
            if l in self.skips:
                yield f"skip{l + 1}", self.skips[l]

    def set_trainable(self, flag: bool):
        for _, layer in self.named_layers():
            layer.trainable = flag

    def forward(self, x: np.ndarray, keep_cache: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.cfg.T_step:
            raise ShapeError(f"expected (B, 1, {self.cfg.T_step}) input, got {x.shape}")
        cache = []
        n = len(self.layers)
        for l, layer in enumerate(self.layers):
            z = layer.forward(x)
            h = z if l == n - 1 else self._act.forward(z)
            skip = self.skips[l].forward(x) if l in self.skips else x
            cache.append((x, h))
            x = skip + h
        self._cache = cache if keep_cache else None
        return x

    def backward(self, grad_out: np.ndarray, need_input_grad: bool = False):
        """Gradients for the cached forward pass; returns ``(grad_x, grads)``."""
        if self._cache is None:
            raise StateError("backward needs a forward pass with keep_cache=True")
        grads = {}
        g = grad_out
        n = len(self.layers)
        for l in range(n - 1, -1, -1):
            x, h = self._cache[l]
            layer = self.layers[l]
            gz = g if l == n - 1 else self._act.backward(h, g)
            want_x = need_input_grad or l > 0
            gx, gl = layer.backward(x, gz, need_input_grad=want_x)
            for k, v in gl.items():
                grads[f"layer{l + 1}.{k}"] = v
            if l in self.skips:
                gs, gsk = self.skips[l].backward(x, g, need_input_grad=want_x)
                for k, v in gsk.items():
                    grads[f"skip{l + 1}.{k}"] = v
                g = gx + gs if want_x else None
            else:
                g = gx + g if want_x else None
        return g, grads


class TargetNetwork:
    """Frozen source backbone, convolution to floors and a per-floor masked layer."""

    def __init__(self, backbone: Optional[SourceNetwork], cfg: NetworkConfig, seed: int = 0):
        self.cfg = cfg.validate()
        self.backbone = backbone
        if backbone is not None:
            backbone.set_trainable(False)
        rng = np.random.default_rng(seed)
        self.conv = ConvHead(cfg.channels, cfg.n_floors, cfg.conv_kernel,
                             pad_right=cfg.conv_pad_right, rng=rng)
        self.head = MaskedLinear(cfg.n_floors, cfg.n_floors, cfg.T_step, cfg.head_t_past,
                                 cfg.head_t_future, rng=rng, channelwise=True,
                                 init=cfg.head_init)
        self._cache = None

    def named_layers(self) -> Iterator[Tuple[str, object]]:
        if self.backbone is not None:
            for name, layer in self.backbone.named_layers():
                yield f"backbone.{name}", layer
        yield "head.conv", self.conv
        yield "head.masked", self.head

    def features(self, x: np.ndarray) -> np.ndarray:
        if self.backbone is None:
            raise StateError("target network has no source backbone loaded")
        return self.backbone.forward(x)

    def forward_head(self, feats: np.ndarray, keep_cache: bool = False) -> np.ndarray:
        c = self.conv.forward(feats)
        h = self.head.forward(c)
        self._cache = (feats, c) if keep_cache else None
        return c + h if self.cfg.head_residual else h

    def forward(self, x: np.ndarray, keep_cache: bool = False) -> np.ndarray:
        return self.forward_head(self.features(x), keep_cache=keep_cache)

    def backward_head(self, grad_out: np.ndarray, need_input_grad: bool = False):
        if self._cache is None:
            raise StateError("backward needs a forward pass with keep_cache=True")
        feats, c = self._cache
        gc, gh = self.head.backward(c, grad_out)
        if self.cfg.head_residual:
            gc = gc + grad_out
        gf, gk = self.conv.backward(feats, gc, need_input_grad=need_input_grad)
        grads = {f"head.masked.{k}": v for k, v in gh.items()}
        grads.update({f"head.conv.{k}": v for k, v in gk.items()})
        return gf, grads


def iter_params(net) -> Iterator[Tuple[str, np.ndarray, object]]:
    """Yield ``(qualified_name, array, layer)`` for every parameter."""
    for lname, layer in net.named_layers():
        for pname, arr in layer.params.items():
            yield f"{lname}.{pname}", arr, layer


def trainable_params(net) -> Dict[str, np.ndarray]:
    return {name: arr for name, arr, layer in iter_params(net) if layer.trainable}


def layer_of(net, qualified: str):
    lname = qualified.rsplit(".", 1)[0]
    return dict(net.named_layers())[lname]


def config_dict(cfg: NetworkConfig) -> dict:
    return asdict(cfg)
