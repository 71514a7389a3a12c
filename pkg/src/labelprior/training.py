"""Deterministic Adam training loop with epoch-level threshold updates,
optional per-epoch dynamic graph refresh, and metric logging."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import NumericError, ParameterError, ShapeError
from .evaluation import ScoreTable, mean_ap
from .losses import (
    LossWeights,
    ThresholdState,
    confident_mask,
    consistency_loss,
    distill_loss,
    focal_margin_loss,
    graph_calibrate,
    record_confidence_hits,
    update_thresholds,
)
from .model import (
    ModelParams,
    _forward_cached,
    gcn_backward,
    init_model,
    predict_batch,
    predict_batch_backward,
)
from .prior import LabelEmbeddings, PriorGraph, build_prior, dynamic_graph, identity_graph


@dataclass
class TrainConfig:
    """Everything a run needs besides the data. Ablation switches mirror the
    component study: enable_sam gates the graph refinement, enable_cst /
    enable_dstl gate the self-supervised terms."""

    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    graph_mode: str = "static"  # static | dynamic | none
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    enable_sam: bool = True
    enable_cst: bool = True
    enable_dstl: bool = True
    gcn_layers: int = 3
    tau: float = 0.2
    leaky_slope: float = 0.2
    graph_k: int = 5
    graph_s: float = 0.2
    graph_tau_prime: float = 1.0
    t_base: float = 0.9
    t_min: float = 0.5
    beta_ramp_epochs: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be at least 1, got {self.batch_size}")
        if not self.learning_rate > 0.0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.graph_mode not in ("static", "dynamic", "none"):
            raise ParameterError(f"unknown graph_mode {self.graph_mode!r}")
        if self.beta_ramp_epochs < 0:
            raise ParameterError("beta_ramp_epochs must be nonnegative")


@dataclass
class EpochRecord:
    """Per-epoch means of the loss components plus tracked metrics.

    pseudo_precision measures the training-time confident-set selections
    against full ground truth; the _calibrated variant applies the same
    selection rule to graph-calibrated weak-view probabilities. Either is
    None when nothing was selected (or no ground truth is available).
    """

    epoch: int
    loss_total: float
    loss_cls: float
    loss_cst: float
    loss_dstl: float
    pseudo_precision: Optional[float]
    pseudo_precision_calibrated: Optional[float]
    test_map: float


TRAINLOG_HEADER = "epoch,loss_total,loss_cls,loss_cst,loss_dstl,pseudo_precision,test_map"


def write_trainlog(path, log: list[EpochRecord]) -> None:
    """Comma-separated text with one row per epoch; absent precision is an
    empty field."""

    def fmt(x) -> str:
        return "" if x is None else repr(float(x))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAINLOG_HEADER + "\n")
        for r in log:
            fh.write(
                f"{r.epoch},{fmt(r.loss_total)},{fmt(r.loss_cls)},{fmt(r.loss_cst)},"
                f"{fmt(r.loss_dstl)},{fmt(r.pseudo_precision)},{fmt(r.test_map)}\n"
            )


@dataclass
class AdamState:
    """First/second moment estimates per parameter array plus the step count."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def like(cls, arrays) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
        )


def adam_step(
    arrays,
    grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Standard Adam with bias correction, updating the arrays in place."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ShapeError("parameter, gradient and state counts disagree")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if a.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {a.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        a -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return arrays, state


def effective_beta(w: LossWeights, epoch: int, ramp_epochs: int) -> float:
    """Optional linear ramp of the pseudo-positive threshold from 1.0 down
    to its configured value over the first ramp_epochs epochs."""
    if ramp_epochs <= 0:
        return w.beta
    frac = min(1.0, epoch / ramp_epochs)
    return 1.0 - (1.0 - w.beta) * frac


def refined_labels(params: ModelParams, graph: PriorGraph, enable_sam: bool):
    """Refined label table plus the forward cache (None when refinement is
    bypassed)."""
    if enable_sam and params.weights:
        z_star, cache = _forward_cached(params, graph)
        return z_star, cache
    return params.label_table, None


def predict_scores(
    params: ModelParams, graph: PriorGraph, features: np.ndarray, enable_sam: bool = True
) -> np.ndarray:
    """Likelihood matrix for a feature batch under the current parameters."""
    z_star, _ = refined_labels(params, graph, enable_sam)
    _, probs = predict_batch(features, z_star, params.tau)
    return probs


def _test_map(params, graph, test_ds: Dataset, enable_sam: bool) -> float:
    probs = predict_scores(params, graph, test_ds.f_base, enable_sam)
    gt = test_ds.y_full if test_ds.y_full is not None else test_ds.y
    return mean_ap(ScoreTable(probs, (gt == 1).astype(np.int8)))


def _build_graph(config: TrainConfig, embeddings: LabelEmbeddings, params) -> PriorGraph:
    if config.graph_mode == "none":
        return identity_graph(
            embeddings.n_labels,
            k=config.graph_k,
            s=config.graph_s,
            tau_prime=config.graph_tau_prime,
        )
    if config.graph_mode == "dynamic":
        return dynamic_graph(
            params.label_table, config.graph_k, config.graph_s, config.graph_tau_prime
        )
    return build_prior(
        embeddings, config.graph_k, config.graph_s, config.graph_tau_prime
    )


def train(
    config: TrainConfig,
    train_ds: Dataset,
    test_ds: Dataset,
    embeddings: LabelEmbeddings,
):
    """Run the full loop; returns (ModelParams, list of EpochRecord).

    Fully deterministic for a fixed config: parameter init, shuffling and
    every update derive from config.seed. Aborts with a NumericError naming
    the offending loss term if any component goes non-finite.
    """
    n = embeddings.n_labels
    if train_ds.n_labels != n or test_ds.n_labels != n:
        raise ShapeError("dataset and embedding label counts disagree")
    if train_ds.dim != embeddings.dim or test_ds.dim != embeddings.dim:
        raise ShapeError("dataset and embedding dimensions disagree")

    params = init_model(
        embeddings,
        layers=config.gcn_layers,
        tau=config.tau,
        seed=config.seed,
        leaky_slope=config.leaky_slope,
    )
    graph = _build_graph(config, embeddings, params)
    state = ThresholdState.new(n, t_base=config.t_base, t_min=config.t_min)
    trainable = [params.label_table] + (params.weights if config.enable_sam else [])
    adam = AdamState.like(trainable)
    shuffle_rng = np.random.default_rng([config.seed, 1])

    m = len(train_ds)
    has_truth = train_ds.y_full is not None
    log: list[EpochRecord] = []

    for epoch in range(1, config.epochs + 1):
        lam_cst = config.weights.lambda_cst if config.enable_cst else 0.0
        lam_dstl = config.weights.lambda_dstl if config.enable_dstl else 0.0
        w_eff = replace(
            config.weights,
            lambda_cst=lam_cst,
            lambda_dstl=lam_dstl,
            beta=effective_beta(config.weights, epoch - 1, config.beta_ramp_epochs),
        )
        perm = shuffle_rng.permutation(m)
        sum_cls = sum_cst = sum_dstl = 0.0
        sel_total = sel_correct = 0
        cal_total = cal_correct = 0

        for start in range(0, m, config.batch_size):
            idx = perm[start : start + config.batch_size]
            b = idx.size
            z_star, cache = refined_labels(params, graph, config.enable_sam)
            logits_w, p_w = predict_batch(train_ds.f_weak[idx], z_star, config.tau)
            logits_s, p_s = predict_batch(train_ds.f_strong[idx], z_star, config.tau)

            cls_vals, d_logits_w = focal_margin_loss(
                logits_w, p_w, train_ds.y[idx], w_eff
            )
            _abort_if_bad(cls_vals, "loss_cls", epoch, start)
            sum_cls += float(cls_vals.sum())

            mask = confident_mask(p_w, state, w_eff.k_conf)
            d_probs_s = np.zeros_like(p_s)
            if lam_cst > 0.0:
                cst_vals, d_cst = consistency_loss(p_s, mask)
                _abort_if_bad(cst_vals, "loss_cst", epoch, start)
                sum_cst += float(cst_vals.sum())
                d_probs_s += lam_cst * d_cst
            teacher = graph_calibrate(p_w, graph.adjacency)
            if lam_dstl > 0.0:
                dstl_vals, d_dstl = distill_loss(teacher, p_s)
                _abort_if_bad(dstl_vals, "loss_dstl", epoch, start)
                sum_dstl += float(dstl_vals.sum())
                d_probs_s += lam_dstl * d_dstl

            d_logits_w = d_logits_w / b
            d_logits_s = (d_probs_s / b) * p_s * (1.0 - p_s)
            d_z_w, _ = predict_batch_backward(
                train_ds.f_weak[idx], z_star, config.tau, d_logits_w
            )
            d_z_s, _ = predict_batch_backward(
                train_ds.f_strong[idx], z_star, config.tau, d_logits_s
            )
            d_z_star = d_z_w + d_z_s
            if config.enable_sam and params.weights:
                d_table, d_weights = gcn_backward(params, graph, cache, d_z_star)
                grads = [d_table] + d_weights
            else:
                grads = [d_z_star]
            adam_step(
                trainable,
                grads,
                adam,
                lr=config.learning_rate,
                beta1=config.beta1,
                beta2=config.beta2,
                eps=config.eps_adam,
            )

            record_confidence_hits(state, p_w)
            if has_truth:
                truth = train_ds.y_full[idx] == 1
                sel_total += int(mask.sum())
                sel_correct += int((mask & truth).sum())
                cal_mask = confident_mask(teacher, state, w_eff.k_conf)
                cal_total += int(cal_mask.sum())
                cal_correct += int((cal_mask & truth).sum())

        update_thresholds(state)
        if config.graph_mode == "dynamic":
            graph = dynamic_graph(
                params.label_table,
                config.graph_k,
                config.graph_s,
                config.graph_tau_prime,
            )
        loss_cls = sum_cls / m
        loss_cst = sum_cst / m
        loss_dstl = sum_dstl / m
        log.append(
            EpochRecord(
                epoch=epoch,
                loss_total=loss_cls + lam_cst * loss_cst + lam_dstl * loss_dstl,
                loss_cls=loss_cls,
                loss_cst=loss_cst,
                loss_dstl=loss_dstl,
                pseudo_precision=(sel_correct / sel_total) if sel_total else None,
                pseudo_precision_calibrated=(cal_correct / cal_total) if cal_total else None,
                test_map=_test_map(params, graph, test_ds, config.enable_sam),
            )
        )

    if not config.enable_sam:
        # The saved model must equal the trained one: unused GCN weights are
        # zeroed so the refinement stage is an exact identity at load time.
        for w in params.weights:
            w[:] = 0.0
    return params, log


def _abort_if_bad(values, term: str, epoch: int, batch_start: int) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(
            f"{term} is non-finite at epoch {epoch}, batch offset {batch_start}"
        )
