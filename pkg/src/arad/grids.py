"""Token grids and multi-directional scan ordering.

A token grid is a [C, H, W] array of feature vectors on a spatial grid.
Four scan orders turn it into causal sequences: row-major, reversed
row-major, column-major, reversed column-major. Predictions made per
direction are folded back onto the grid and averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np


class ScanDirection(IntEnum):
    ROW_FWD = 1
    ROW_REV = 2
    COL_FWD = 3
    COL_REV = 4


ALL_DIRECTIONS: tuple[ScanDirection, ...] = tuple(ScanDirection)

_ROW_MAJOR = (ScanDirection.ROW_FWD, ScanDirection.ROW_REV)
_REVERSED = (ScanDirection.ROW_REV, ScanDirection.COL_REV)


@dataclass
class TokenGrid:
    """Feature vectors on a spatial grid: data[c, i, j] is channel c of cell (i, j)."""

    data: np.ndarray
    hierarchy: int = 0
    downsample: int = 1

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError(f"token grid must be [C, H, W], got shape {self.data.shape}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def shape_hw(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    @property
    def n_cells(self) -> int:
        return self.data.shape[1] * self.data.shape[2]


@dataclass
class TokenSequence:
    """One flattened scan of a grid: tokens[l] is the l-th visited cell's feature vector."""

    tokens: np.ndarray  # [L, C]
    direction: ScanDirection
    hierarchy: int = 0
    offset_m: int = 0

    def __len__(self) -> int:
        return self.tokens.shape[0]


def unfold(data: np.ndarray, direction: ScanDirection) -> np.ndarray:
    """Flatten grid data [C, H, W] to [L, C] in the given scan order."""
    c, h, w = data.shape
    if direction in _ROW_MAJOR:
        seq = data.reshape(c, h * w).T
    else:
        seq = data.transpose(0, 2, 1).reshape(c, h * w).T
    if direction in _REVERSED:
        seq = seq[::-1]
    return np.ascontiguousarray(seq)


def fold(seq: np.ndarray, direction: ScanDirection, shape_hw: tuple[int, int]) -> np.ndarray:
    """Inverse of unfold: place sequence [L, C] back on a [C, H, W] grid."""
    h, w = shape_hw
    if seq.ndim != 2 or seq.shape[0] != h * w:
        raise ValueError(f"sequence of shape {seq.shape} does not fold onto a {h}x{w} grid")
    if direction in _REVERSED:
        seq = seq[::-1]
    c = seq.shape[1]
    if direction in _ROW_MAJOR:
        return np.ascontiguousarray(seq.T.reshape(c, h, w))
    return np.ascontiguousarray(seq.T.reshape(c, w, h).transpose(0, 2, 1))


def mds(grid: TokenGrid) -> list[TokenSequence]:
    """Unfold a grid in all four scan directions."""
    return [
        TokenSequence(unfold(grid.data, k), k, hierarchy=grid.hierarchy)
        for k in ALL_DIRECTIONS
    ]


def mds_inverse(predicted: Sequence[np.ndarray], shape_hw: tuple[int, int]) -> np.ndarray:
    """Fold per-direction predictions back onto the grid and average them.

    `predicted` holds four [L, C] arrays in ScanDirection order. Summation is
    pairwise so that four identical inputs average back to themselves bit for
    bit (a+a and 2a+2a are exact; a linear fold of four equal terms is not).
    """
    if len(predicted) != 4:
        raise ValueError(f"expected one prediction per scan direction (4), got {len(predicted)}")
    g1, g2, g3, g4 = (fold(np.asarray(p), k, shape_hw) for p, k in zip(predicted, ALL_DIRECTIONS))
    return ((g1 + g2) + (g3 + g4)) / 4


def offset_for(grid: TokenGrid, direction: ScanDirection, m: int) -> int:
    """Sequence offset realizing a prediction step of m grid lines.

    Row-major scans advance one row per H^w tokens, so stepping m rows ahead
    means predicting m*W positions ahead in the sequence; column-major scans
    step m columns, i.e. m*H positions.
    """
    if m < 1:
        raise ValueError(f"prediction step m must be >= 1, got {m}")
    h, w = grid.shape_hw
    offset = m * w if direction in _ROW_MAJOR else m * h
    if offset >= h * w:
        raise ValueError(
            f"offset {offset} is not smaller than sequence length {h * w}: "
            f"{h}x{w} grid is too small for prediction step m={m}"
        )
    return offset
