"""Generic traversal of parameter structures.

Parameter containers are nested dataclasses whose leaves are numpy arrays
(lists index into the name path). Field declaration order makes the walk --
and therefore optimizer state, checkpoints, and gradient accumulation --
deterministic.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator

import numpy as np


def walk_arrays(obj, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
    if isinstance(obj, np.ndarray):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from walk_arrays(getattr(obj, f.name), name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from walk_arrays(item, f"{prefix}.{i}" if prefix else str(i))
    # scalars, strings, configs: not parameters


def named_tensors(obj) -> dict[str, np.ndarray]:
    return dict(walk_arrays(obj))


def assign_tensors(obj, tensors: dict[str, np.ndarray], prefix: str = "") -> None:
    """Copy values from a name->array mapping into an existing structure in place."""
    for name, arr in walk_arrays(obj, prefix):
        if name not in tensors:
            raise KeyError(f"missing tensor {name!r}")
        src = tensors[name]
        if tuple(src.shape) != arr.shape:
            raise ValueError(f"tensor {name!r} has shape {tuple(src.shape)}, expected {arr.shape}")
        arr[...] = src.astype(arr.dtype, copy=False)


def add_scaled(dst, src, scale: float = 1.0) -> None:
    """dst += scale * src, walking both structures in lockstep."""
    dst_arrays = list(walk_arrays(dst))
    src_arrays = dict(walk_arrays(src))
    for name, arr in dst_arrays:
        arr += scale * src_arrays[name]


def scale_inplace(obj, scale: float) -> None:
    for _, arr in walk_arrays(obj):
        arr *= scale
