"""Quantitative analysis of predictions.

Pixel-pooled precision/recall/F1 and MAE, structural coherence (deviation of
connected-component and hole counts from ground truth, with a minimum-area
filter and border exclusion), confidence quality via error-AUROC, and
threshold sweeps over ensemble confidences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, stats

from .errors import InvalidArgumentError, ShapeError
from .inference import binarize

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    mae: float


@dataclass
class CoherenceReport:
    cc_deviation: float
    hole_deviation: float
    min_area: int


def _check_collections(preds, gts):
    if len(preds) != len(gts) or len(preds) == 0:
        raise ShapeError(f"need matching non-empty collections, got {len(preds)} vs {len(gts)}")
    for p, g in zip(preds, gts):
        if np.asarray(p).shape != np.asarray(g).shape:
            raise ShapeError(f"mask shapes differ: {np.asarray(p).shape} vs {np.asarray(g).shape}")


def pooled_counts(preds, gts) -> tuple[int, int, int]:
    """TP/FP/FN of the change class pooled over all pixels of all samples."""
    _check_collections(preds, gts)
    tp = fp = fn = 0
    for p, g in zip(preds, gts):
        p = np.asarray(p).astype(bool)
        g = np.asarray(g).astype(bool)
        tp += int((p & g).sum())
        fp += int((p & ~g).sum())
        fn += int((~p & g).sum())
    return tp, fp, fn


def prf_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def binary_prf(preds, gts, soft_preds=None) -> MetricsReport:
    """Change-class precision/recall/F1 pooled over the split; MAE from soft masks.

    When ``soft_preds`` is omitted the binary predictions double as the soft
    ones (MAE then equals the pixel error rate).
    """
    tp, fp, fn = pooled_counts(preds, gts)
    precision, recall, f1 = prf_from_counts(tp, fp, fn)
    softs = preds if soft_preds is None else soft_preds
    _check_collections(softs, gts)
    abs_err = 0.0
    count = 0
    for s, g in zip(softs, gts):
        abs_err += float(np.abs(np.asarray(s, dtype=np.float64) - np.asarray(g, dtype=np.float64)).sum())
        count += np.asarray(g).size
    return MetricsReport(precision=precision, recall=recall, f1=f1, mae=abs_err / count)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return FOUR_CONNECTED
    if connectivity == 8:
        return EIGHT_CONNECTED
    raise InvalidArgumentError(f"connectivity must be 4 or 8, got {connectivity}")


def count_components(mask: np.ndarray, min_area: int = 10, connectivity: int = 4) -> int:
    """Foreground components with area strictly exceeding ``min_area``."""
    mask = np.asarray(mask).astype(bool)
    labels, n = ndimage.label(mask, structure=_structure(connectivity))
    if n == 0:
        return 0
    areas = np.bincount(labels.ravel())[1:]
    return int((areas > min_area).sum())


def count_holes(mask: np.ndarray, min_area: int = 10, connectivity: int = 4) -> int:
    """Enclosed background components (not touching the border) above the area filter."""
    mask = np.asarray(mask).astype(bool)
    labels, n = ndimage.label(~mask, structure=_structure(connectivity))
    if n == 0:
        return 0
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    areas = np.bincount(labels.ravel())
    count = 0
    for lab in range(1, n + 1):
        if lab in border:
            continue
        if areas[lab] > min_area:
            count += 1
    return count


def coherence_report(preds, gts, min_area: int = 10, connectivity: int = 4) -> CoherenceReport:
    """Mean absolute deviation of component and hole counts vs. ground truth."""
    _check_collections(preds, gts)
    cc_dev = []
    hole_dev = []
    for p, g in zip(preds, gts):
        cc_dev.append(abs(count_components(p, min_area, connectivity) - count_components(g, min_area, connectivity)))
        hole_dev.append(abs(count_holes(p, min_area, connectivity) - count_holes(g, min_area, connectivity)))
    return CoherenceReport(float(np.mean(cc_dev)), float(np.mean(hole_dev)), min_area)


def error_auroc(confidences, preds, gts) -> float | None:
    """How well low decision-confidence predicts per-pixel errors.

    Target is the error indicator (pred != gt); the score is 1 minus the
    decision confidence max(conf, 1 - conf), so that confident agreement on
    either class counts as confident. AUROC is the Mann-Whitney rank
    statistic with midrank tie handling. Returns None when the split has no
    errors or only errors (not computable).
    """
    _check_collections(preds, gts)
    _check_collections(confidences, gts)
    scores = []
    targets = []
    for conf, p, g in zip(confidences, preds, gts):
        conf = np.asarray(conf, dtype=np.float64)
        decision_conf = np.maximum(conf, 1.0 - conf)
        scores.append((1.0 - decision_conf).ravel())
        targets.append((np.asarray(p).astype(bool) != np.asarray(g).astype(bool)).ravel())
    score = np.concatenate(scores)
    target = np.concatenate(targets)
    n_pos = int(target.sum())
    n_neg = target.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = stats.rankdata(score)  # midranks for ties
    rank_sum = float(ranks[target].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def threshold_sweep(stacks, gts, thresholds) -> list[dict]:
    """Binarize ensemble means at each threshold; pooled P/R/F1 per row."""
    thresholds = list(thresholds)
    if not thresholds or not all(0.0 < th < 1.0 for th in thresholds):
        raise InvalidArgumentError(f"thresholds must lie in (0, 1), got {thresholds}")
    confidences = [np.asarray(stack).mean(axis=0) if np.asarray(stack).ndim == 3 else np.asarray(stack)
                   for stack in stacks]
    _check_collections(confidences, gts)
    rows = []
    for th in thresholds:
        preds = [binarize(conf, th) for conf in confidences]
        tp, fp, fn = pooled_counts(preds, gts)
        precision, recall, f1 = prf_from_counts(tp, fp, fn)
        rows.append({"threshold": th, "precision": precision, "recall": recall, "f1": f1})
    return rows
