"""Ranking metrics (average precision, mAP) and pseudo-label precision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EvaluationError, ShapeError, ValidationError


@dataclass(frozen=True)
class ScoreTable:
    """Per-sample per-class scores with binary ground truth."""

    scores: np.ndarray
    gt: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        gt = np.asarray(self.gt)
        if scores.ndim != 2 or scores.shape != gt.shape:
            raise ShapeError(
                f"scores {scores.shape} and ground truth {gt.shape} must be equal 2-D shapes"
            )
        if not np.isin(gt, (0, 1)).all():
            raise ValidationError("ground truth must be binary")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "gt", gt.astype(np.int8))


def average_precision(scores, gt) -> float:
    """Average precision of one class's sample ranking.

    Samples are ranked by descending score, ties by ascending index; AP is
    the mean of precision-at-rank over the positive samples.
    """
    scores = np.asarray(scores, dtype=np.float64)
    gt = np.asarray(gt)
    if scores.ndim != 1 or scores.shape != gt.shape:
        raise ShapeError("scores and ground truth must be equal-length vectors")
    n_pos = int((gt == 1).sum())
    if n_pos == 0:
        raise EvaluationError("average precision undefined without positives")
    order = np.argsort(-scores, kind="stable")
    hits = (gt[order] == 1).astype(np.float64)
    cum = np.cumsum(hits)
    ranks = np.arange(1, scores.size + 1, dtype=np.float64)
    return float((cum[hits == 1.0] / ranks[hits == 1.0]).sum() / n_pos)


def per_class_ap(table: ScoreTable) -> list[Optional[float]]:
    """AP per class; classes without positives are skipped (None)."""
    out: list[Optional[float]] = []
    for c in range(table.scores.shape[1]):
        if (table.gt[:, c] == 1).any():
            out.append(average_precision(table.scores[:, c], table.gt[:, c]))
        else:
            out.append(None)
    return out


def mean_ap(table: ScoreTable) -> float:
    """Unweighted mean of per-class AP over classes that have positives."""
    aps = [ap for ap in per_class_ap(table) if ap is not None]
    if not aps:
        raise EvaluationError("no class has a positive sample")
    return float(sum(aps) / len(aps))


def pseudo_precision(selections, y_full) -> Optional[float]:
    """Fraction of selected (sample, class) pairs that are true positives.

    `selections` is a list of index arrays (one per sample) or a boolean
    matrix. Returns None when nothing was selected.
    """
    y_full = np.asarray(y_full)
    if isinstance(selections, np.ndarray) and selections.dtype == bool:
        if selections.shape != y_full.shape:
            raise ShapeError("selection mask and ground truth disagree in shape")
        total = int(selections.sum())
        if total == 0:
            return None
        correct = int((selections & (y_full == 1)).sum())
        return correct / total
    total = 0
    correct = 0
    for i, sel in enumerate(selections):
        sel = np.asarray(sel, dtype=np.int64)
        total += sel.size
        correct += int((y_full[i, sel] == 1).sum())
    if total == 0:
        return None
    return correct / total


def write_eval_report(path, names, per_class, map_value: float) -> None:
    """CSV report: one `<class>,<ap>` row per class (blank AP for skipped
    classes) and a final `mAP,<value>` row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class,ap\n")
        for name, ap in zip(names, per_class):
            fh.write(f"{name},{'' if ap is None else repr(float(ap))}\n")
        fh.write(f"mAP,{float(map_value)!r}\n")
