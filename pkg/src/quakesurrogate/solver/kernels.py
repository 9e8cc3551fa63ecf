"""Kernel backend selection.

The compiled extension is preferred; set ``QUAKESURROGATE_PURE_PYTHON=1`` to
force the interpreted kernels (used by the cross-check tests and benchmark).
"""
import os

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("QUAKESURROGATE_PURE_PYTHON"):
    backend = compiled_backend
else:
    backend = python_backend

BACKEND_NAME = "cython" if backend is compiled_backend else "python"


def get_backend(name=None):
    """Return a kernel module by name (``"cython"``, ``"python"`` or None for default)."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    raise ValueError(f"unknown kernel backend {name!r}")
