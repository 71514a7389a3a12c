"""Training objectives for incomplete multi-label supervision.

Includes the focal-margin classification loss with pseudo-positive
correction of confident unknowns, graph calibration of prediction vectors,
per-class dynamic confidence thresholds, confident-set construction, the
consistency loss on strong-view predictions, and the calibrated
self-distillation KL. Every loss returns its value together with the exact
gradient w.r.t. its probability or logit inputs; teacher quantities
(confident sets, calibrated weak-view distributions) carry no gradient.

All loss functions accept a single prediction vector of length n or a
batch of shape (batch, n); reductions are over the class axis, so batched
calls return one value per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ParameterError, ShapeError
from .numerics import clamp_prob, sigmoid
from .prior import PriorGraph


@dataclass(frozen=True)
class LossWeights:
    """Scalar knobs of the combined objective."""

    lambda_cst: float = 0.125
    lambda_dstl: float = 0.125
    alpha: float = 2.0
    beta: float = 0.6
    margin: float = 1.0
    k_conf: int = 3

    def __post_init__(self):
        if self.lambda_cst < 0.0 or self.lambda_dstl < 0.0:
            raise ParameterError("loss weights must be nonnegative")
        if not 0.0 < self.beta <= 1.0:
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")
        if self.margin < 0.0:
            raise ParameterError(f"margin must be nonnegative, got {self.margin}")
        if self.alpha < 0.0:
            raise ParameterError(f"alpha must be nonnegative, got {self.alpha}")
        if self.k_conf < 1:
            raise ParameterError(f"k_conf must be at least 1, got {self.k_conf}")


@dataclass
class ThresholdState:
    """Per-class dynamic thresholds plus the confident-hit counts that
    drive their per-epoch update."""

    thresholds: np.ndarray
    hits: np.ndarray
    t_base: float = 0.9
    t_min: float = 0.5

    @classmethod
    def new(cls, n_labels: int, t_base: float = 0.9, t_min: float = 0.5):
        if not 0.0 < t_base <= 1.0:
            raise ParameterError(f"t_base must lie in (0, 1], got {t_base}")
        if not 0.0 < t_min <= t_base:
            raise ParameterError(
                f"t_min must lie in (0, t_base], got {t_min} vs {t_base}"
            )
        return cls(
            thresholds=np.full(n_labels, t_base, dtype=np.float64),
            hits=np.zeros(n_labels, dtype=np.int64),
            t_base=t_base,
            t_min=t_min,
        )


def record_confidence_hits(state: ThresholdState, p_weak) -> ThresholdState:
    """Count weak-view probabilities exceeding the base threshold; call once
    per batch."""
    p = np.atleast_2d(np.asarray(p_weak, dtype=np.float64))
    state.hits += (p > state.t_base).sum(axis=0)
    return state


def update_thresholds(state: ThresholdState) -> ThresholdState:
    """Per-epoch threshold update: scale the base threshold by each class's
    hit count relative to the best class, floored at t_min; resets hits."""
    scale = state.hits / max(int(state.hits.max()), 1)
    state.thresholds = np.maximum(state.t_min, scale * state.t_base)
    state.hits = np.zeros_like(state.hits)
    return state


def confident_set(p_weak: np.ndarray, state: ThresholdState, k_conf: int) -> np.ndarray:
    """Indices of the top-k_conf weak-view probabilities that also exceed
    their per-class threshold; ties prefer the lower index."""
    if k_conf < 1:
        raise ParameterError(f"k_conf must be at least 1, got {k_conf}")
    p = np.asarray(p_weak, dtype=np.float64)
    order = np.argsort(-p, kind="stable")[:k_conf]
    keep = order[p[order] > state.thresholds[order]]
    return np.sort(keep)


def confident_mask(p_weak: np.ndarray, state: ThresholdState, k_conf: int) -> np.ndarray:
    """Batched confident_set as a boolean mask of shape (batch, n)."""
    if k_conf < 1:
        raise ParameterError(f"k_conf must be at least 1, got {k_conf}")
    p = np.atleast_2d(np.asarray(p_weak, dtype=np.float64))
    k = min(k_conf, p.shape[1])
    idx = np.argsort(-p, axis=1, kind="stable")[:, :k]
    top = np.take_along_axis(p, idx, axis=1)
    passed = top > state.thresholds[idx]
    mask = np.zeros(p.shape, dtype=bool)
    np.put_along_axis(mask, idx, passed, axis=1)
    return mask


def graph_calibrate(p, w_matrix: np.ndarray) -> np.ndarray:
    """Calibrate a prediction vector (or batch) by a row-stochastic
    correlation matrix: each output entry is a convex combination of the
    input probabilities."""
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w_matrix, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise CalibrationError(f"calibration matrix must be square, got {w.shape}")
    if np.any(w < 0.0) or np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-9:
        raise CalibrationError("calibration matrix must be row-stochastic")
    if p.shape[-1] != w.shape[0]:
        raise ShapeError(f"prediction length {p.shape[-1]} != matrix size {w.shape[0]}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ParameterError("probabilities must lie in [0, 1]")
    return p @ w.T


def focal_margin_loss(logits, probs, y, w: LossWeights):
    """Classification loss over an incomplete label vector.

    Annotated positives use a focal term on the margin-shifted probability;
    annotated negatives and unknowns use a focal assumed-negative term,
    except that entries whose probability exceeds beta are treated as
    recovered positives. y holds +1 (positive), 0 (annotated negative),
    -1 (unknown). Returns (value, gradient on the raw logits).
    """
    logits = np.asarray(logits, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y)
    if logits.shape != probs.shape or logits.shape != y.shape:
        raise ShapeError("logits, probs and labels must share a shape")
    alpha, beta = w.alpha, w.beta
    q = sigmoid(logits - w.margin)
    qc = clamp_prob(q)
    pc = clamp_prob(probs)

    pos_val = -((1.0 - q) ** alpha) * np.log(qc)
    neg_easy_val = -(probs**alpha) * np.log1p(-pc)
    neg_hard_val = -((1.0 - probs) ** alpha) * np.log(pc)
    value = np.where(
        y == 1, pos_val, np.where(probs <= beta, neg_easy_val, neg_hard_val)
    ).sum(axis=-1)

    pos_g = alpha * q * (1.0 - q) ** alpha * np.log(qc) - (1.0 - q) ** (alpha + 1.0)
    neg_easy_g = -alpha * (probs**alpha) * (1.0 - probs) * np.log1p(-pc) + probs ** (
        alpha + 1.0
    )
    neg_hard_g = alpha * probs * (1.0 - probs) ** alpha * np.log(pc) - (
        1.0 - probs
    ) ** (alpha + 1.0)
    grad = np.where(y == 1, pos_g, np.where(probs <= beta, neg_easy_g, neg_hard_g))
    return value, grad


def consistency_loss(p_strong, selected):
    """Binary cross-entropy of strong-view probabilities against the
    confident set: selected classes are targets, all others negatives.

    `selected` is an index array (vector input) or boolean mask (either
    input). Returns (value, gradient on p_strong).
    """
    p = np.asarray(p_strong, dtype=np.float64)
    mask = np.asarray(selected)
    if mask.dtype != bool:
        idx = mask
        mask = np.zeros(p.shape, dtype=bool)
        mask[..., idx] = True
    if mask.shape != p.shape:
        raise ShapeError(f"mask shape {mask.shape} != predictions {p.shape}")
    pc = clamp_prob(p)
    value = -(np.where(mask, np.log(pc), np.log1p(-pc))).sum(axis=-1)
    grad = np.where(mask, -1.0 / pc, 1.0 / (1.0 - pc))
    return value, grad


def distill_loss(q_teacher, p_strong):
    """Per-class binary KL from the (fixed) calibrated weak-view teacher to
    the strong-view prediction; nonnegative, zero only at equality.

    Returns (value, gradient on p_strong); no gradient flows to the teacher.
    """
    q = clamp_prob(np.asarray(q_teacher, dtype=np.float64))
    p = clamp_prob(np.asarray(p_strong, dtype=np.float64))
    if q.shape != p.shape:
        raise ShapeError(f"teacher shape {q.shape} != student shape {p.shape}")
    value = (q * np.log(q / p) + (1.0 - q) * np.log((1.0 - q) / (1.0 - p))).sum(axis=-1)
    grad = -q / p + (1.0 - q) / (1.0 - p)
    return value, grad


def selfsup_loss(p_weak, p_strong, graph: PriorGraph, state: ThresholdState, w: LossWeights):
    """Weighted sum of the consistency and self-distillation objectives for
    one sample. Returns (value, gradient on p_strong, consistency value,
    distillation value). Components with zero weight are skipped entirely
    and contribute exact zeros."""
    p_weak = np.asarray(p_weak, dtype=np.float64)
    p_strong = np.asarray(p_strong, dtype=np.float64)
    grad = np.zeros_like(p_strong)
    cst_val = 0.0
    dstl_val = 0.0
    if w.lambda_cst > 0.0:
        sel = confident_set(p_weak, state, w.k_conf)
        val, g = consistency_loss(p_strong, sel)
        cst_val = float(val)
        grad += w.lambda_cst * g
    if w.lambda_dstl > 0.0:
        teacher = graph_calibrate(p_weak, graph.adjacency)
        val, g = distill_loss(teacher, p_strong)
        dstl_val = float(val)
        grad += w.lambda_dstl * g
    total = w.lambda_cst * cst_val + w.lambda_dstl * dstl_val
    return total, grad, cst_val, dstl_val


@dataclass(frozen=True)
class LossBreakdown:
    """Value and gradients of the full objective for one sample."""

    total: float
    cls: float
    cst: float
    dstl: float
    grad_logits_weak: np.ndarray
    grad_probs_strong: np.ndarray


def total_loss(
    logits_weak,
    probs_weak,
    probs_strong,
    y,
    graph: PriorGraph,
    state: ThresholdState,
    w: LossWeights,
) -> LossBreakdown:
    """Classification loss on the weak view plus the weighted
    self-supervised objectives on the strong view."""
    cls_val, d_logits = focal_margin_loss(logits_weak, probs_weak, y, w)
    ssl_val, d_ps, cst_val, dstl_val = selfsup_loss(probs_weak, probs_strong, graph, state, w)
    return LossBreakdown(
        total=float(cls_val) + ssl_val,
        cls=float(cls_val),
        cst=cst_val,
        dstl=dstl_val,
        grad_logits_weak=d_logits,
        grad_probs_strong=d_ps,
    )
