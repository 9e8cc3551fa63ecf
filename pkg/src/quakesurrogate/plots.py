"""Vector-graphics figures. Output is byte-stable for identical inputs."""
from __future__ import annotations

from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "quakesurrogate", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def loss_curves(path, train: Sequence[float], val: Sequence[float] = (), title: str = ""):
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogy(np.arange(len(train)), train, label="train")
        if len(val):
            ax.semilogy(np.arange(len(val)), val, label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
    _save(fig, path)


def correlation_boxes(path, groups: Dict[str, Sequence[float]], ylabel: str = "r"):
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        labels = list(groups)
        ax.boxplot([np.asarray(groups[k]) for k in labels], whis=1.5)
        ax.set_xticks(range(1, len(labels) + 1), labels)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
    _save(fig, path)


def scatter_truth(path, truth, pred, label: str):
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.scatter(truth, pred, s=8)
        hi = float(max(truth.max(initial=0.0), pred.max(initial=0.0))) or 1.0
        ax.plot([0, hi], [0, hi], "k--", lw=0.8)
        ax.set_xlabel(f"true {label}")
        ax.set_ylabel(f"predicted {label}")
        fig.tight_layout()
    _save(fig, path)


def histories(path, t, truth, pred, title: str = ""):
    """Overlay true and predicted histories, one panel per channel."""
    truth = np.atleast_2d(truth)
    pred = np.atleast_2d(pred)
    n = truth.shape[0]
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(n, 1, figsize=(6, 1.6 * n + 0.6), sharex=True, squeeze=False)
        for k in range(n):
            ax = axes[k, 0]
            ax.plot(t, truth[k], "k", lw=0.8, label="true")
            ax.plot(t, pred[k], "r--", lw=0.8, label="predicted")
            ax.set_ylabel(f"ch {k + 1}")
        axes[0, 0].set_title(title)
        axes[0, 0].legend(loc="upper right", fontsize="small")
        axes[-1, 0].set_xlabel("time (s)")
        fig.tight_layout()
    _save(fig, path)


def exceedance(path, curves: Dict[str, tuple], xlabel: str):
    """``curves`` maps a label to ``(thresholds, probabilities)``."""
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, (x, p) in curves.items():
            ax.step(x, p, where="post", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("50-year exceedance probability")
        ax.set_ylim(0, 1)
        ax.legend()
        fig.tight_layout()
    _save(fig, path)
