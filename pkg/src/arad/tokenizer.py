"""Image-to-token-grid frontends, the token wire format, and the feature adapter.

Two token sources exist behind one geometry: the builtin tokenizer projects
raw image patches through frozen random orthonormal maps (self-contained, no
pretrained weights), and imported mode reads grids that an external feature
extractor wrote as .vtok files. Both are frozen: no gradient ever reaches
them. The trainable piece is a per-hierarchy residual adapter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    TokenFileMagicError,
    TokenFileShapeError,
    TokenFileTruncatedError,
    TokenFileVersionError,
)
from .grids import TokenGrid

TOKEN_MAGIC = b"VARTOK1\x00"
TOKEN_VERSION = 1
TOKEN_SUFFIX = ".vtok"

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class HierarchyGeometry:
    channels: int
    grid_h: int
    grid_w: int
    downsample: int


@dataclass
class TokenizerConfig:
    mode: str = "builtin"  # "builtin" or "imported"
    image_size: tuple[int, int] = (128, 128)
    downsamples: tuple[int, ...] = (8, 16, 32)
    channels: int = 16
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("builtin", "imported"):
            raise ValueError(f"tokenizer mode must be 'builtin' or 'imported', got {self.mode!r}")
        if self.mode != "builtin":
            # imported grids carry their actual shapes; patch arithmetic (and
            # its divisibility constraint) only exists for the builtin frontend
            return
        h, w = self.image_size
        for n in self.downsamples:
            if h % n or w % n:
                raise ValueError(f"image size {h}x{w} is not divisible by patch size {n}")
            if self.channels > 3 * n * n:
                raise ValueError(
                    f"cannot make {self.channels} orthonormal projections from {3 * n * n}-pixel patches"
                )

    def geometry(self) -> list[HierarchyGeometry]:
        h, w = self.image_size
        return [
            HierarchyGeometry(self.channels, h // n, w // n, n) for n in self.downsamples
        ]


def normalize_image(pixels: np.ndarray, mean, std, dtype=np.float32) -> np.ndarray:
    """uint8 [H, W, 3] to channel-first float, scaled to [0,1] then standardized."""
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected [H, W, 3] pixels, got shape {pixels.shape}")
    x = pixels.astype(dtype) / np.asarray(255.0, dtype=dtype)
    x = (x - np.asarray(mean, dtype=dtype)) / np.asarray(std, dtype=dtype)
    return np.ascontiguousarray(x.transpose(2, 0, 1))


class BuiltinTokenizer:
    """Frozen seeded patch projections: one [C, 3*N*N] orthonormal-row map per hierarchy."""

    def __init__(self, config: TokenizerConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.projections: list[np.ndarray] = []
        root = np.random.SeedSequence([config.seed, 0x70C3])
        for n, child in zip(config.downsamples, root.spawn(len(config.downsamples))):
            rng = np.random.default_rng(child)
            gauss = rng.standard_normal((3 * n * n, config.channels))
            q, r = np.linalg.qr(gauss)
            q = q * np.sign(np.diag(r))  # fix QR sign ambiguity for determinism
            self.projections.append(np.ascontiguousarray(q.T, dtype=dtype))

    def tokenize(self, image: np.ndarray) -> list[TokenGrid]:
        """image [3, H, W] -> one grid per hierarchy, coarse to fine ordering preserved."""
        h_img, w_img = self.config.image_size
        if image.shape != (3, h_img, w_img):
            raise ValueError(
                f"image shape {image.shape} does not match configured size (3, {h_img}, {w_img})"
            )
        grids = []
        for idx, (n, proj) in enumerate(zip(self.config.downsamples, self.projections)):
            gh, gw = h_img // n, w_img // n
            patches = (
                image.reshape(3, gh, n, gw, n)
                .transpose(1, 3, 0, 2, 4)
                .reshape(gh * gw, 3 * n * n)
            )
            tokens = patches.astype(self.dtype, copy=False) @ proj.T
            data = np.ascontiguousarray(tokens.T.reshape(self.config.channels, gh, gw))
            grids.append(TokenGrid(data, hierarchy=idx, downsample=n))
        return grids


@dataclass
class AdapterParams:
    """Residual linear map per hierarchy; zero init makes it the identity."""

    weight: np.ndarray  # [C, C]
    bias: np.ndarray  # [C]


def init_adapter(channels: int, dtype=np.float32) -> AdapterParams:
    return AdapterParams(
        weight=np.zeros((channels, channels), dtype=dtype),
        bias=np.zeros(channels, dtype=dtype),
    )


def zeros_like_adapter(p: AdapterParams) -> AdapterParams:
    return AdapterParams(weight=np.zeros_like(p.weight), bias=np.zeros_like(p.bias))


def adapt(params: AdapterParams, grid: TokenGrid) -> TokenGrid:
    """Apply W x + b + x to every cell's feature vector."""
    c = grid.channels
    if params.weight.shape != (c, c):
        raise ValueError(f"adapter expects {params.weight.shape[0]} channels, grid has {c}")
    flat = grid.data.reshape(c, -1).T
    out = flat @ params.weight.T + params.bias + flat
    return TokenGrid(
        np.ascontiguousarray(out.T.reshape(grid.data.shape)),
        hierarchy=grid.hierarchy,
        downsample=grid.downsample,
    )


def adapt_backward(params: AdapterParams, grid: TokenGrid, dout: np.ndarray) -> AdapterParams:
    """Parameter gradients given dout [C, H, W]; the source features are frozen."""
    c = grid.channels
    flat = grid.data.reshape(c, -1).T
    dflat = dout.reshape(c, -1).T
    return AdapterParams(weight=dflat.T @ flat, bias=dflat.sum(axis=0))


def token_path_for(image_path: Path | str) -> Path:
    return Path(image_path).with_suffix(TOKEN_SUFFIX)


def write_token_file(path: Path | str, grids: list[TokenGrid], image_hw: tuple[int, int]) -> None:
    """Serialize grids: magic, version, source size, then per-hierarchy blocks.

    Each block is u32 C, u32 H, u32 W followed by C*H*W little-endian f32
    values, channel-major then row-major (the natural [C, H, W] C layout).
    """
    h, w = image_hw
    parts = [TOKEN_MAGIC, struct.pack("<III", TOKEN_VERSION, h, w), struct.pack("<I", len(grids))]
    for g in grids:
        c, gh, gw = g.data.shape
        parts.append(struct.pack("<III", c, gh, gw))
        parts.append(np.ascontiguousarray(g.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_token_file(path: Path | str) -> tuple[list[TokenGrid], tuple[int, int]]:
    """Parse a token file; returns (grids, source image size)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(TOKEN_MAGIC) or raw[: len(TOKEN_MAGIC)] != TOKEN_MAGIC:
        raise TokenFileMagicError(f"{path}: not a token file (bad magic)")
    off = len(TOKEN_MAGIC)

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise TokenFileTruncatedError(f"{path}: unexpected end of token payload")
        chunk = raw[off : off + n]
        off += n
        return chunk

    version, h, w = struct.unpack("<III", take(12))
    if version != TOKEN_VERSION:
        raise TokenFileVersionError(f"{path}: unsupported token file version {version}")
    (n_grids,) = struct.unpack("<I", take(4))
    grids = []
    for idx in range(n_grids):
        c, gh, gw = struct.unpack("<III", take(12))
        payload = take(4 * c * gh * gw)
        data = np.frombuffer(payload, dtype="<f4").reshape(c, gh, gw)
        downsample = h // gh if gh else 1
        grids.append(TokenGrid(data.astype(np.float32), hierarchy=idx, downsample=downsample))
    return grids, (h, w)


def check_token_geometry(
    path: Path | str,
    grids: list[TokenGrid],
    image_hw: tuple[int, int],
    expected: list[HierarchyGeometry],
    expected_hw: tuple[int, int] | None = None,
) -> None:
    """Raise TokenFileShapeError when grids disagree with the expected geometry."""
    if expected_hw is not None and tuple(image_hw) != tuple(expected_hw):
        raise TokenFileShapeError(
            f"{path}: token source size {image_hw} does not match expected {tuple(expected_hw)}"
        )
    if len(grids) != len(expected):
        raise TokenFileShapeError(
            f"{path}: {len(grids)} hierarchies in file, expected {len(expected)}"
        )
    for g, e in zip(grids, expected):
        if g.data.shape != (e.channels, e.grid_h, e.grid_w):
            raise TokenFileShapeError(
                f"{path}: hierarchy {g.hierarchy} has shape {g.data.shape}, "
                f"expected ({e.channels}, {e.grid_h}, {e.grid_w})"
            )
