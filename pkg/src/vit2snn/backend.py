"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback has the same
signatures and operation counts. ``VIT2SNN_KERNELS`` overrides the choice:
``auto`` (default), ``compiled`` or ``python``.
"""

from __future__ import annotations

import os

from . import _kernels_py

_CHOICES = ("auto", "compiled", "python")


def _load(name: str):
    if name not in _CHOICES:
        raise ValueError(f"VIT2SNN_KERNELS must be one of {_CHOICES}, got {name!r}")
    if name == "python":
        return _kernels_py
    try:
        from . import _kernels  # compiled extension
        return _kernels
    except ImportError:
        if name == "compiled":
            raise
        return _kernels_py


kernels = _load(os.environ.get("VIT2SNN_KERNELS", "auto"))


def backend_name() -> str:
    """Name of the active kernel backend ('compiled' or 'python')."""
    return kernels.BACKEND_NAME


def get_backend(name: str):
    """Load a specific backend module (used by tests and benchmarks)."""
    return _load(name)
