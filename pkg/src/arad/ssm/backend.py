"""Kernel backend registry.

The compiled extension is preferred when importable; ARAD_BACKEND=numpy|cython
overrides, and set_backend switches at runtime (used by parity tests and the
benchmark).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import kernels_numpy

_BACKENDS: dict[str, ModuleType] = {"numpy": kernels_numpy}

try:
    from . import _kernels  # type: ignore[attr-defined]

    _BACKENDS["cython"] = _kernels
    _default = "cython"
except ImportError:
    _default = "numpy"

_active = os.environ.get("ARAD_BACKEND", _default)
if _active not in _BACKENDS:
    raise ImportError(
        f"ARAD_BACKEND={_active!r} is not available; choose from {sorted(_BACKENDS)}"
    )


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}")
    _active = name


def kernels(name: str | None = None) -> ModuleType:
    return _BACKENDS[name or _active]
