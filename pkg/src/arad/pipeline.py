"""Scoring and training objective.

Per hierarchy: adapt the token grid, unfold it in four directions, predict
every token from context ending m grid lines earlier, fold the predictions
back and average. The per-cell squared error between the folded predictions
and the adapted grid is that hierarchy's anomaly map; the image map is the
sum of all hierarchy maps bilinearly upsampled to pixel resolution. The
training loss is the mean of the same per-cell errors at token resolution
plus the mean squared end-marker prediction error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blocks import predictor_backward, predictor_forward
from .errors import DataError
from .grids import ALL_DIRECTIONS, TokenGrid, fold, mds, mds_inverse, unfold
from .model import Model, Trainables, zeros_like_trainables
from .tensors import add_scaled
from .tokenizer import adapt, adapt_backward

MAP_MAGIC = b"VARMAP1\x00"


@dataclass
class AnomalyMap:
    scores: np.ndarray  # [H, W], pixel resolution
    per_hierarchy: list[np.ndarray] | None = None  # token-resolution maps

    @property
    def image_score(self) -> float:
        return float(self.scores.max())


@dataclass
class _HierarchyForward:
    grid: TokenGrid  # raw tokens
    adapted: TokenGrid
    predictions: list[np.ndarray]  # per direction, [L, C]
    end_outputs: list[np.ndarray]  # per direction, [M, C]
    caches: list
    folded: np.ndarray  # [C, H, W] direction-averaged predictions
    cell_errors: np.ndarray  # [H, W]


def bilinear_upsample(a: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping.

    Written in lerp form (base + fraction * difference) so constant inputs
    reproduce exactly.
    """
    h, w = a.shape
    out_h, out_w = out_hw
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0).astype(a.dtype)[:, None]
    fx = (sx - x0).astype(a.dtype)[None, :]
    rows = a[y0] + fy * (a[y1] - a[y0])
    return rows[:, x0] + fx * (rows[:, x1] - rows[:, x0])


def _forward_hierarchy(model: Model, h_idx: int, grid: TokenGrid, want_cache: bool) -> _HierarchyForward:
    adapted = adapt(model.trainables.adapters[h_idx], grid)
    predictor = model.predictor_for(h_idx)
    sequences = mds(adapted)
    predictions, end_outputs, caches = [], [], []
    for seq in sequences:
        offset = model.offsets[h_idx][seq.direction]
        out, cache = predictor_forward(predictor, seq.tokens, offset, want_cache=want_cache)
        predictions.append(out[: len(seq)])
        end_outputs.append(out[len(seq) :])
        caches.append(cache)
    folded = mds_inverse(predictions, grid.shape_hw)
    diff = folded - adapted.data
    cell_errors = (diff * diff).sum(axis=0)
    return _HierarchyForward(grid, adapted, predictions, end_outputs, caches, folded, cell_errors)


def score_grids(model: Model, grids: list[TokenGrid]) -> AnomalyMap:
    """Anomaly map from token grids: summed upsampled per-hierarchy error maps."""
    if len(grids) != len(model.geometry):
        raise DataError(
            f"model expects {len(model.geometry)} token hierarchies, got {len(grids)}"
        )
    out_hw = model.tok_config.image_size
    total = np.zeros(out_hw, dtype=grids[0].data.dtype)
    per_h = []
    for h_idx, grid in enumerate(grids):
        fw = _forward_hierarchy(model, h_idx, grid, want_cache=False)
        per_h.append(fw.cell_errors)
        total += bilinear_upsample(fw.cell_errors, out_hw)
    return AnomalyMap(scores=total, per_hierarchy=per_h)


def score_image(model: Model, image: np.ndarray) -> AnomalyMap:
    return score_grids(model, model.tokenize(image))


def loss_grids(
    model: Model, grids: list[TokenGrid], want_grads: bool = True
) -> tuple[float, Trainables | None]:
    """Training objective and, optionally, gradients for every trainable tensor.

    loss = mean per-cell squared prediction error over all hierarchies
         + mean per-row squared end-marker error over all (hierarchy, direction).
    """
    if len(grids) != len(model.geometry):
        raise DataError(
            f"model expects {len(model.geometry)} token hierarchies, got {len(grids)}"
        )
    forwards = [
        _forward_hierarchy(model, h_idx, grid, want_cache=want_grads)
        for h_idx, grid in enumerate(grids)
    ]
    n_cells = sum(g.n_cells for g in grids)
    n_end_rows = sum(model.offsets[h][k] for h in range(len(grids)) for k in ALL_DIRECTIONS)

    main = 0.0
    end_term = 0.0
    for h_idx, fw in enumerate(forwards):
        main += float(fw.cell_errors.sum())
        end_rows = model.predictor_for(h_idx).end
        for k_idx in range(4):
            e = fw.end_outputs[k_idx] - end_rows[: fw.end_outputs[k_idx].shape[0]]
            end_term += float((e * e).sum())
    loss = main / n_cells + end_term / n_end_rows
    if not want_grads:
        return loss, None

    grads = zeros_like_trainables(model.trainables)
    for h_idx, fw in enumerate(forwards):
        predictor = model.predictor_for(h_idx)
        pred_grads_slot = grads.predictors[0 if model.config.share_predictor else h_idx]
        d_folded = (2.0 / n_cells) * (fw.folded - fw.adapted.data)
        d_adapted = -d_folded.copy()
        for k_idx, k in enumerate(ALL_DIRECTIONS):
            offset = model.offsets[h_idx][k]
            d_pred = unfold(d_folded, k) / 4.0
            e = fw.end_outputs[k_idx] - predictor.end[:offset]
            d_end_out = (2.0 / n_end_rows) * e
            d_full = np.vstack([d_pred, d_end_out])
            d_tokens, pgrads = predictor_backward(predictor, fw.caches[k_idx], d_full)
            pgrads.end[:offset] -= d_end_out  # end markers are targets: opposite sign
            add_scaled(pred_grads_slot, pgrads)
            d_adapted += fold(d_tokens, k, fw.grid.shape_hw)
        agrads = adapt_backward(model.trainables.adapters[h_idx], fw.grid, d_adapted)
        add_scaled(grads.adapters[h_idx], agrads)
    return loss, grads


def loss_image(model: Model, image: np.ndarray, want_grads: bool = True):
    return loss_grids(model, model.tokenize(image), want_grads=want_grads)


def write_map_file(path: Path | str, scores: np.ndarray) -> None:
    """Raw anomaly map: magic, u32 H, u32 W, then H*W little-endian f32 row-major."""
    h, w = scores.shape
    payload = np.ascontiguousarray(scores, dtype="<f4").tobytes()
    Path(path).write_bytes(MAP_MAGIC + struct.pack("<II", h, w) + payload)


def read_map_file(path: Path | str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:8] != MAP_MAGIC:
        raise DataError(f"{path}: not an anomaly map file (bad magic)")
    if len(raw) < 16:
        raise DataError(f"{path}: truncated anomaly map header")
    h, w = struct.unpack("<II", raw[8:16])
    expected = 16 + 4 * h * w
    if len(raw) < expected:
        raise DataError(f"{path}: truncated anomaly map payload")
    return np.frombuffer(raw[16:expected], dtype="<f4").reshape(h, w).astype(np.float32)


def write_map_png(path: Path | str, scores: np.ndarray) -> None:
    """Min-max normalized 8-bit visualization next to the raw map."""
    from PIL import Image

    lo = float(scores.min())
    hi = float(scores.max())
    if hi > lo:
        norm = (scores - lo) / (hi - lo)
    else:
        norm = np.zeros_like(scores)
    Image.fromarray((norm * 255.0 + 0.5).astype(np.uint8), mode="L").save(path)
