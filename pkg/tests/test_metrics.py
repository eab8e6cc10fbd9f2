"""Ranking metrics against brute-force oracles, including tie handling."""

import numpy as np
import pytest

from arad.errors import MetricUndefinedError
from arad.metrics import (
    auroc,
    average_precision,
    evaluate_category,
    max_f1,
    metrics_csv,
)


# Oracles: quadratic pairwise AUROC and a per-threshold loop, structured
# nothing like the vectorized implementations they check.


def oracle_auroc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def oracle_sweep(scores, labels):
    """(f1, ap) from an explicit loop over distinct thresholds, descending."""
    n_pos = sum(labels)
    best_f1 = 0.0
    ap = 0.0
    prev_recall = 0.0
    for theta in sorted(set(scores), reverse=True):
        tp = sum(1 for s, l in zip(scores, labels) if s >= theta and l)
        fp = sum(1 for s, l in zip(scores, labels) if s >= theta and not l)
        fn = n_pos - tp
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)
        best_f1 = max(best_f1, f1)
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return best_f1, ap


def test_worked_example():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    assert auroc(scores, labels) == 0.75
    assert max_f1(scores, labels) == 0.8
    assert abs(average_precision(scores, labels) - 5.0 / 6.0) < 1e-15


def test_matches_oracles_bitwise_including_ties():
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 1000:
        n = int(rng.integers(2, 65))
        if rng.random() < 0.5:
            scores = np.round(rng.random(n) * 4) / 4  # heavy ties
        else:
            scores = rng.standard_normal(n)
        labels = (rng.random(n) < 0.4).astype(int)
        if labels.sum() in (0, n):
            continue
        checked += 1
        s_list, l_list = scores.tolist(), labels.tolist()
        assert auroc(scores, labels) == oracle_auroc(s_list, l_list)
        want_f1, want_ap = oracle_sweep(s_list, l_list)
        assert max_f1(scores, labels) == want_f1
        assert average_precision(scores, labels) == want_ap


def test_all_tied_scores():
    scores = [1.0, 1.0, 1.0, 1.0]
    labels = [0, 1, 0, 1]
    assert auroc(scores, labels) == 0.5
    # one threshold declaring everything positive: precision = prevalence
    assert max_f1(scores, labels) == 2.0 * 2 / (2.0 * 2 + 2 + 0)
    assert average_precision(scores, labels) == 0.5


def test_monotone_transform_invariance():
    rng = np.random.default_rng(5)
    scores = rng.standard_normal(40)
    labels = (rng.random(40) < 0.5).astype(int)
    transformed = 3.0 * scores + 1.0
    assert auroc(scores, labels) == auroc(transformed, labels)
    assert max_f1(scores, labels) == max_f1(transformed, labels)
    assert average_precision(scores, labels) == average_precision(transformed, labels)


def test_single_class_raises():
    with pytest.raises(MetricUndefinedError, match="single class"):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(MetricUndefinedError, match="no positive labels"):
        max_f1([0.1, 0.2], [0, 0])
    with pytest.raises(MetricUndefinedError, match="no positive labels"):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(MetricUndefinedError, match="no samples"):
        auroc([], [])


def test_validation_errors():
    with pytest.raises(ValueError, match="shape"):
        auroc([0.1, 0.2], [1])
    with pytest.raises(ValueError, match="finite"):
        auroc([0.1, np.nan], [0, 1])


def test_evaluate_category_pools_pixels(rng):
    maps = [rng.random((4, 4)), rng.random((4, 4))]
    masks = [np.zeros((4, 4), dtype=np.uint8), np.zeros((4, 4), dtype=np.uint8)]
    masks[1][1:3, 1:3] = 255
    result = evaluate_category(maps, masks)
    pooled_scores = np.concatenate([m.ravel() for m in maps])
    pooled_labels = np.concatenate([(m != 0).astype(int).ravel() for m in masks])
    assert result.pixel.auroc == auroc(pooled_scores, pooled_labels)
    # image level: max score per map, defect flag per mask
    img_scores = [m.max() for m in maps]
    assert result.image.auroc == auroc(img_scores, [0, 1])


def test_evaluate_category_single_class_degrades_to_none(rng):
    maps = [rng.random((3, 3)), rng.random((3, 3))]
    all_defect = [np.full((3, 3), 255, dtype=np.uint8)] * 2
    result = evaluate_category(maps, all_defect)
    assert result.image is None  # both images defective: one class
    assert result.pixel is None  # every pixel positive: one class

    both = [np.zeros((3, 3), dtype=np.uint8), np.full((3, 3), 255, dtype=np.uint8)]
    result = evaluate_category(maps, both)
    assert result.image is not None and result.pixel is not None


def test_evaluate_category_shape_mismatch(rng):
    with pytest.raises(ValueError, match="img 0"):
        evaluate_category([rng.random((3, 3))], [np.zeros((4, 4))], names=["img 0"])


def test_metrics_csv_format(rng):
    maps = [rng.random((3, 3)), rng.random((3, 3))]
    masks = [np.zeros((3, 3), dtype=np.uint8), np.zeros((3, 3), dtype=np.uint8)]
    masks[1][0, 0] = 255
    csv = metrics_csv("widget", evaluate_category(maps, masks))
    lines = csv.strip().split("\n")
    assert lines[0] == "category,level,auroc,max_f1,ap"
    assert lines[1].startswith("widget,pixel,") and lines[2].startswith("widget,image,")

    none_csv = metrics_csv("w", evaluate_category(maps, [masks[0], masks[0]]))
    assert "w,pixel,NA,NA,NA" in none_csv and "w,image,NA,NA,NA" in none_csv
