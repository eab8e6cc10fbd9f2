"""Ranking metrics for anomaly maps: AUROC, best F1 over thresholds, average precision.

Tie handling is pinned down exactly: AUROC gives half credit to score ties
(midrank form of the rank-sum statistic), and threshold sweeps treat every
tied group as one decision point (prediction rule: score >= threshold). All
counts are integers held in float64, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError


def _validate(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"scores shape {scores.shape} != labels shape {labels.shape}")
    if scores.size == 0:
        raise MetricUndefinedError("metric undefined: no samples")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    labels = (labels != 0).astype(np.int64)
    return scores, labels


def _require_two_classes(labels: np.ndarray, metric: str) -> None:
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricUndefinedError(
            f"{metric} undefined: labels contain a single class "
            f"({n_pos} positive of {labels.size})"
        )


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied scores sharing their average rank."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    n = s.size
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    counts = np.diff(np.r_[starts, n])
    group_of = np.cumsum(np.r_[True, s[1:] != s[:-1]]) - 1
    avg = starts + (counts + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg[group_of]
    return ranks


def auroc(scores, labels) -> float:
    """Probability a positive outranks a negative, ties counted half."""
    scores, labels = _validate(scores, labels)
    _require_two_classes(labels, "AUROC")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = _midranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _descending_groups(scores: np.ndarray, labels: np.ndarray):
    """Cumulative TP/FP at each distinct threshold, highest threshold first."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(l, dtype=np.float64)[ends]
    fp = np.cumsum(1 - l, dtype=np.float64)[ends]
    return tp, fp


def max_f1(scores, labels) -> float:
    """Best F1 over all decision thresholds (score >= threshold is positive)."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricUndefinedError("max-F1 undefined: no positive labels")
    tp, fp = _descending_groups(scores, labels)
    fn = n_pos - tp
    f1 = 2.0 * tp / (2.0 * tp + fp + fn)
    return float(f1.max())


def average_precision(scores, labels) -> float:
    """Area under precision as a step function of recall, threshold sweep form."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricUndefinedError("average precision undefined: no positive labels")
    tp, fp = _descending_groups(scores, labels)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    prev = np.r_[0.0, recall[:-1]]
    # plain left-to-right accumulation, mirrored by the brute-force oracle
    total = 0.0
    for dr, p in zip((recall - prev).tolist(), precision.tolist()):
        total += dr * p
    return float(total)


@dataclass
class MetricTriple:
    auroc: float
    max_f1: float
    average_precision: float


@dataclass
class CategoryResult:
    pixel: MetricTriple | None
    image: MetricTriple | None


def _triple(scores: np.ndarray, labels: np.ndarray) -> MetricTriple:
    return MetricTriple(
        auroc=auroc(scores, labels),
        max_f1=max_f1(scores, labels),
        average_precision=average_precision(scores, labels),
    )


def evaluate_category(
    maps: list[np.ndarray], masks: list[np.ndarray], names: list[str] | None = None
) -> CategoryResult:
    """Pixel metrics over all pixels pooled; image metrics over per-image max scores.

    Either level degrades to None when its labels are single-class (e.g. no
    defective images in the set).
    """
    if len(maps) != len(masks):
        raise ValueError(f"{len(maps)} maps but {len(masks)} masks")
    names = names or [f"image {i}" for i in range(len(maps))]
    for amap, mask, name in zip(maps, masks, names):
        if amap.shape != mask.shape:
            raise ValueError(
                f"{name}: anomaly map shape {amap.shape} does not match mask shape {mask.shape}"
            )
    pixel_scores = np.concatenate([m.ravel() for m in maps])
    pixel_labels = np.concatenate([(m != 0).astype(np.int64).ravel() for m in masks])
    image_scores = np.array([float(m.max()) for m in maps])
    image_labels = np.array([int((m != 0).any()) for m in masks])

    def guarded(scores, labels):
        try:
            return _triple(scores, labels)
        except MetricUndefinedError:
            return None

    return CategoryResult(
        pixel=guarded(pixel_scores, pixel_labels),
        image=guarded(image_scores, image_labels),
    )


def metrics_csv(category: str, result: CategoryResult) -> str:
    """CSV rows `category,level,auroc,max_f1,ap`, NA for undefined levels."""
    lines = ["category,level,auroc,max_f1,ap"]
    for level, triple in (("pixel", result.pixel), ("image", result.image)):
        if triple is None:
            lines.append(f"{category},{level},NA,NA,NA")
        else:
            lines.append(
                f"{category},{level},{triple.auroc:.6f},{triple.max_f1:.6f},"
                f"{triple.average_precision:.6f}"
            )
    return "\n".join(lines) + "\n"
