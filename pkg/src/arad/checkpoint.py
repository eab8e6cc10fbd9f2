"""Checkpoint serialization.

Layout: 8-byte magic, u32 format version, u32 JSON length + sorted-keys JSON
metadata (config echo, epoch, optimizer step), u32 tensor count, then per
tensor: u16 name length, name, u8 ndim, u32 dims, f32 little-endian payload.
Trainable tensors, frozen tokenizer projections (frozen.*), and optimizer
moments (opt.m.*, opt.v.*) all live in one flat namespace, so runs can be
compared byte for byte and frozen parameters audited across epochs.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import Model, ModelConfig, init_model
from .tensors import assign_tensors, named_tensors
from .tokenizer import HierarchyGeometry, TokenizerConfig

CKPT_MAGIC = b"ARADCKP1"
CKPT_VERSION = 1


def save_checkpoint(path: Path | str, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    meta_json = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [
        CKPT_MAGIC,
        struct.pack("<I", CKPT_VERSION),
        struct.pack("<I", len(meta_json)),
        meta_json,
        struct.pack("<I", len(tensors)),
    ]
    for name in sorted(tensors):
        # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d,
        # and tobytes() already emits C order for any layout
        data = np.asarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: Path | str) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    if len(raw) < 8 or raw[:8] != CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    off = 8

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise DataError(f"{path}: truncated checkpoint")
        chunk = raw[off : off + n]
        off += n
        return chunk

    (version,) = struct.unpack("<I", take(4))
    if version != CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = take(4 * size)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    return meta, tensors


def _config_to_meta(model: Model) -> dict:
    return {
        "tokenizer": dataclasses.asdict(model.tok_config),
        "model": dataclasses.asdict(model.config),
        "geometry": [dataclasses.asdict(g) for g in model.geometry],
    }


def model_tensors(model: Model) -> dict[str, np.ndarray]:
    tensors = named_tensors(model.trainables)
    if model.tokenizer is not None:
        for i, proj in enumerate(model.tokenizer.projections):
            tensors[f"frozen.projections.{i}"] = proj
    return tensors


def save_model_checkpoint(
    path: Path | str,
    model: Model,
    epoch: int,
    opt_tensors: dict[str, np.ndarray] | None = None,
    opt_step: int = 0,
    extra_meta: dict | None = None,
) -> None:
    meta = {
        "kind": "arad-model",
        "epoch": epoch,
        "opt_step": opt_step,
        "config": _config_to_meta(model),
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = model_tensors(model)
    if opt_tensors:
        for name, arr in opt_tensors.items():
            tensors[name] = arr
    save_checkpoint(path, meta, tensors)


def tokenizer_config_from_meta(d: dict) -> TokenizerConfig:
    return TokenizerConfig(
        mode=d["mode"],
        image_size=tuple(d["image_size"]),
        downsamples=tuple(d["downsamples"]),
        channels=d["channels"],
        mean=tuple(d["mean"]),
        std=tuple(d["std"]),
        seed=d["seed"],
    )


def model_config_from_meta(d: dict) -> ModelConfig:
    return ModelConfig(**d)


def model_from_checkpoint(
    path: Path | str, dtype=np.float32
) -> tuple[Model, dict, dict[str, np.ndarray]]:
    """Rebuild a model from a checkpoint; returns (model, meta, raw tensors)."""
    meta, tensors = load_checkpoint(path)
    if meta.get("kind") != "arad-model":
        raise DataError(f"{path}: checkpoint does not hold a model")
    cfg = meta["config"]
    tok_config = tokenizer_config_from_meta(cfg["tokenizer"])
    model_config = model_config_from_meta(cfg["model"])
    geometry = [HierarchyGeometry(**g) for g in cfg["geometry"]]
    model = init_model(
        tok_config, model_config, seed=tok_config.seed, dtype=dtype, geometry=geometry
    )
    try:
        assign_tensors(model.trainables, tensors)
        if model.tokenizer is not None:
            for i in range(len(model.tokenizer.projections)):
                frozen = tensors[f"frozen.projections.{i}"]
                model.tokenizer.projections[i] = frozen.astype(dtype)
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: checkpoint tensors do not match config: {e}") from e
    return model, meta, tensors
