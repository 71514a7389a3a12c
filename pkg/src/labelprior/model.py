"""Label classifier in embedding space.

A learnable label table is refined by a stack of graph-convolution layers
under a fixed prior adjacency, added back through a residual connection,
and matched against an input feature with a temperature-scaled cosine
followed by a sigmoid. Backward passes are hand-derived and exact; the
adjacency is treated as a constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVectorError, ParameterError, ParseError, ShapeError
from .numerics import PROB_EPS, as_matrix, clamp_prob, sigmoid
from .prior import LabelEmbeddings, PriorGraph


@dataclass
class ModelParams:
    """Learnable state: label table (n x d), GCN weights (each d x d),
    likelihood temperature, and the LeakyReLU slope."""

    label_table: np.ndarray
    weights: list[np.ndarray]
    tau: float
    leaky_slope: float = 0.2

    def __post_init__(self):
        self.label_table = np.array(self.label_table, dtype=np.float64)
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        if not self.tau > 0.0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        d = self.label_table.shape[1]
        for w in self.weights:
            if w.shape != (d, d):
                raise ShapeError(
                    f"GCN weights must be {d}x{d} (residual needs constant width), got {w.shape}"
                )

    @property
    def n_labels(self) -> int:
        return self.label_table.shape[0]

    @property
    def dim(self) -> int:
        return self.label_table.shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class Prediction:
    """Per-label likelihoods of one feature vector against refined labels."""

    z_star: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def init_model(
    emb: LabelEmbeddings,
    layers: int = 3,
    tau: float = 0.01,
    seed: int = 0,
    leaky_slope: float = 0.2,
) -> ModelParams:
    """Label table copied from the embeddings; hidden weights drawn
    uniform(-b, b) with b = sqrt(6 / 2d), deterministic for a given seed.

    The last layer starts at zero so the residual refinement is an exact
    identity at initialization; a randomly initialized final layer would
    perturb the label table by noise of its own magnitude, which short
    training runs cannot recover from.
    """
    if layers < 1:
        raise ParameterError(f"need at least one GCN layer, got {layers}")
    d = emb.dim
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (2.0 * d))
    weights = [rng.uniform(-bound, bound, size=(d, d)) for _ in range(layers - 1)]
    weights.append(np.zeros((d, d)))
    return ModelParams(emb.vectors.copy(), weights, tau=tau, leaky_slope=leaky_slope)


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def _leaky_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, 1.0, slope)


def gcn_forward(params: ModelParams, graph: PriorGraph) -> np.ndarray:
    """Refined label table: residual of the input table and the last
    graph-convolution layer."""
    z_star, _ = _forward_cached(params, graph)
    return z_star


def _forward_cached(params: ModelParams, graph: PriorGraph):
    if graph.n_labels != params.n_labels:
        raise ShapeError(
            f"graph has {graph.n_labels} labels, model has {params.n_labels}"
        )
    if not params.weights:
        return params.label_table.copy(), ([params.label_table], [])
    h = params.label_table
    hs = [h]
    pres = []
    for w in params.weights:
        pre = graph.adjacency @ h @ w
        h = leaky_relu(pre, params.leaky_slope)
        pres.append(pre)
        hs.append(h)
    return params.label_table + h, (hs, pres)


def gcn_backward(params: ModelParams, graph: PriorGraph, cache, d_z_star: np.ndarray):
    """Exact gradients of the refined table w.r.t. the label table and each
    GCN weight; the adjacency is a constant."""
    hs, pres = cache
    if not params.weights:
        return d_z_star.copy(), []
    a = graph.adjacency
    d_h = d_z_star.copy()
    d_weights = [None] * len(params.weights)
    for layer in reversed(range(len(params.weights))):
        d_pre = d_h * _leaky_grad(pres[layer], params.leaky_slope)
        d_weights[layer] = (a @ hs[layer]).T @ d_pre
        d_h = a.T @ d_pre @ params.weights[layer].T
    return d_h + d_z_star, d_weights


def predict_batch(features: np.ndarray, z_star: np.ndarray, tau: float):
    """Temperature-scaled cosine likelihoods for a batch of features.

    Returns (logits, probs) with shape (batch, n); probs are clamped to
    (PROB_EPS, 1 - PROB_EPS) so they stay inside the open interval even at
    extreme temperatures.
    """
    features = as_matrix(features, "features")
    z_star = as_matrix(z_star, "refined labels")
    if not tau > 0.0:
        raise ParameterError(f"tau must be positive, got {tau}")
    if features.shape[1] != z_star.shape[1]:
        raise ShapeError(
            f"feature dim {features.shape[1]} != label dim {z_star.shape[1]}"
        )
    f_norms = np.linalg.norm(features, axis=1)
    z_norms = np.linalg.norm(z_star, axis=1)
    if np.any(f_norms == 0.0):
        raise DegenerateVectorError("feature with zero norm")
    if np.any(z_norms == 0.0):
        raise DegenerateVectorError("refined label with zero norm")
    cos = (features / f_norms[:, None]) @ (z_star / z_norms[:, None]).T
    logits = cos / tau
    return logits, clamp_prob(sigmoid(logits))


def predict(f: np.ndarray, z_star: np.ndarray, tau: float) -> Prediction:
    """Single-feature wrapper around predict_batch."""
    f = np.asarray(f, dtype=np.float64)
    logits, probs = predict_batch(f[None, :], z_star, tau)
    return Prediction(z_star=z_star, logits=logits[0], probs=probs[0])


def predict_batch_backward(
    features: np.ndarray, z_star: np.ndarray, tau: float, d_logits: np.ndarray
):
    """Gradients of the cosine/temperature logits w.r.t. the refined labels
    and the features, given upstream gradients on the logits."""
    features = as_matrix(features, "features")
    z_star = as_matrix(z_star, "refined labels")
    d_logits = as_matrix(d_logits, "upstream logits gradient")
    f_norms = np.linalg.norm(features, axis=1)
    z_norms = np.linalg.norm(z_star, axis=1)
    f_hat = features / f_norms[:, None]
    z_hat = z_star / z_norms[:, None]
    cos = f_hat @ z_hat.T
    g = d_logits / tau
    d_z_hat = g.T @ f_hat
    proj_z = np.sum(g * cos, axis=0)
    d_z = (d_z_hat - z_hat * proj_z[:, None]) / z_norms[:, None]
    d_f_hat = g @ z_hat
    proj_f = np.sum(g * cos, axis=1)
    d_f = (d_f_hat - f_hat * proj_f[:, None]) / f_norms[:, None]
    return d_z, d_f


def model_backward(params: ModelParams, graph: PriorGraph, f: np.ndarray, d_probs: np.ndarray):
    """Gradients of the full refine-then-predict map for one feature, given
    upstream gradients on the likelihoods. Returns (d_label_table,
    d_weights, d_feature)."""
    f = np.asarray(f, dtype=np.float64)
    z_star, cache = _forward_cached(params, graph)
    logits, probs = predict_batch(f[None, :], z_star, params.tau)
    d_logits = np.asarray(d_probs, dtype=np.float64)[None, :] * probs * (1.0 - probs)
    d_z, d_f = predict_batch_backward(f[None, :], z_star, params.tau, d_logits)
    d_table, d_weights = gcn_backward(params, graph, cache, d_z)
    return d_table, d_weights, d_f[0]


def save_checkpoint(path, params: ModelParams) -> None:
    """Text checkpoint: header `n d L tau leaky_slope`, label-table rows,
    then each weight matrix row-major, 17 significant digits."""
    n, d = params.label_table.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"{n} {d} {params.n_layers} {params.tau:.17g} {params.leaky_slope:.17g}\n"
        )
        for row in params.label_table:
            fh.write(" ".join(f"{float(v):.17g}" for v in row) + "\n")
        for w in params.weights:
            for row in w:
                fh.write(" ".join(f"{float(v):.17g}" for v in row) + "\n")


def load_checkpoint(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty checkpoint", line=1)
    header = lines[0].split()
    if len(header) != 5:
        raise ParseError("expected `n d L tau leaky_slope` header", line=1)
    try:
        n, d, layers = int(header[0]), int(header[1]), int(header[2])
        tau, slope = float(header[3]), float(header[4])
    except ValueError:
        raise ParseError("malformed checkpoint header", line=1) from None
    expected = 1 + n + layers * d
    if len(lines) < expected:
        raise ParseError(f"expected {expected} lines", line=len(lines) + 1)

    def parse_block(start: int, rows: int, cols: int) -> np.ndarray:
        block = []
        for i in range(rows):
            tokens = lines[start + i].split()
            if len(tokens) != cols:
                raise ParseError(
                    f"expected {cols} entries, got {len(tokens)}", line=start + i + 1
                )
            try:
                block.append([float(t) for t in tokens])
            except ValueError:
                raise ParseError("non-numeric entry", line=start + i + 1) from None
        return np.asarray(block, dtype=np.float64)

    table = parse_block(1, n, d)
    weights = [parse_block(1 + n + layer * d, d, d) for layer in range(layers)]
    return ModelParams(table, weights, tau=tau, leaky_slope=slope)
