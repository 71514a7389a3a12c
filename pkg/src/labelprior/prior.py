"""Row-stochastic label-to-label prior graphs built from label embeddings.

Pipeline: clamped pairwise cosine correlation -> per-row top-K
sparsification (diagonal exempt) -> fixed self-weight re-weighting ->
masked row softmax. The resulting adjacency drives both the graph
refinement of label representations and probability calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ParseError, ValidationError
from .numerics import as_matrix, masked_row_softmax, normalize_rows

GRAPH_MODES = ("static", "dynamic", "none")


@dataclass(frozen=True)
class LabelEmbeddings:
    """Named n x d matrix of per-label vectors; rows must have nonzero norm."""

    names: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = as_matrix(self.vectors, "embeddings")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "names", list(self.names))
        n = len(self.names)
        if n < 2:
            raise ValidationError(f"need at least 2 labels, got {n}")
        if vectors.shape[0] != n:
            raise ValidationError(
                f"{n} names but {vectors.shape[0]} embedding rows"
            )
        if len(set(self.names)) != n:
            raise ValidationError("label names must be unique")
        for name in self.names:
            if not name or any(c.isspace() for c in name):
                raise ValidationError(f"bad label name {name!r}")
        normalize_rows(vectors, "embeddings")  # rejects zero-norm rows

    @property
    def n_labels(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class PriorGraph:
    """Row-stochastic adjacency over labels plus the parameters that built it."""

    adjacency: np.ndarray
    k: int
    s: float
    tau_prime: float
    mode: str = "static"

    def __post_init__(self):
        adj = as_matrix(self.adjacency, "adjacency")
        object.__setattr__(self, "adjacency", adj)
        n = adj.shape[0]
        if adj.shape[1] != n:
            raise ValidationError(f"adjacency must be square, got {adj.shape}")
        if self.mode not in GRAPH_MODES:
            raise ValidationError(f"unknown graph mode {self.mode!r}")
        if np.any(adj < 0.0):
            raise ValidationError("adjacency entries must be nonnegative")
        sums = adj.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise ValidationError("adjacency rows must sum to 1")
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"s must lie in (0, 1), got {self.s}")
        if not self.tau_prime > 0.0:
            raise ParameterError(f"tau_prime must be positive, got {self.tau_prime}")
        if self.k < 0:
            raise ParameterError(f"k must be nonnegative, got {self.k}")

    @property
    def n_labels(self) -> int:
        return self.adjacency.shape[0]


def build_correlation(emb: LabelEmbeddings) -> np.ndarray:
    """Clamped cosine correlation: max(0, cos(z_i, z_j)), unit diagonal."""
    return _correlation(emb.vectors)


def _correlation(vectors: np.ndarray) -> np.ndarray:
    rows = normalize_rows(vectors, "label vectors")
    a = rows @ rows.T
    a = 0.5 * (a + a.T)  # enforce exact symmetry against BLAS rounding
    np.clip(a, 0.0, 1.0, out=a)
    np.fill_diagonal(a, 1.0)
    return a


def sparsify_topk(a: np.ndarray, k: int) -> np.ndarray:
    """Keep the K largest off-diagonal entries of each row (ties prefer the
    lower column index); the diagonal is always retained."""
    a = as_matrix(a, "correlation")
    n = a.shape[0]
    if a.shape[1] != n:
        raise ParameterError(f"correlation must be square, got {a.shape}")
    if not 1 <= k <= n:
        raise ParameterError(f"K must lie in [1, {n}], got {k}")
    out = np.zeros_like(a)
    cols = np.arange(n)
    for i in range(n):
        off = cols[cols != i]
        order = np.argsort(-a[i, off], kind="stable")
        keep = off[order[:k]]
        out[i, keep] = a[i, keep]
        out[i, i] = a[i, i]
    return out


def reweight(a_sparse: np.ndarray, s: float) -> np.ndarray:
    """Assign fixed weight 1-s to the diagonal and rescale each row's
    off-diagonal mass to total s. Rows with no off-diagonal mass keep a
    lone diagonal weight of 1."""
    a_sparse = as_matrix(a_sparse, "sparse correlation")
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0, 1), got {s}")
    n = a_sparse.shape[0]
    out = np.zeros_like(a_sparse)
    for i in range(n):
        off = a_sparse[i].copy()
        off[i] = 0.0
        total = off.sum()
        if total == 0.0:
            out[i, i] = 1.0
        else:
            out[i] = (s / total) * off
            out[i, i] = 1.0 - s
    return out


def normalize_graph(a_bar: np.ndarray, tau_prime: float) -> np.ndarray:
    """Masked row softmax over the nonzero entries of the re-weighted graph."""
    return masked_row_softmax(a_bar, tau_prime)


def build_prior(emb: LabelEmbeddings, k: int, s: float, tau_prime: float) -> PriorGraph:
    """Full static pipeline from embeddings to a row-stochastic prior graph."""
    adjacency = _pipeline(emb.vectors, k, s, tau_prime)
    return PriorGraph(adjacency, k=k, s=s, tau_prime=tau_prime, mode="static")


def dynamic_graph(z_current: np.ndarray, k: int, s: float, tau_prime: float) -> PriorGraph:
    """Same pipeline as build_prior, sourced from the model's live label table."""
    adjacency = _pipeline(z_current, k, s, tau_prime)
    return PriorGraph(adjacency, k=k, s=s, tau_prime=tau_prime, mode="dynamic")


def identity_graph(n: int, k: int = 1, s: float = 0.2, tau_prime: float = 1.0) -> PriorGraph:
    """Prior disabled: the adjacency is the identity."""
    if n < 1:
        raise ParameterError(f"need at least 1 label, got {n}")
    return PriorGraph(np.eye(n), k=k, s=s, tau_prime=tau_prime, mode="none")


def _pipeline(vectors: np.ndarray, k: int, s: float, tau_prime: float) -> np.ndarray:
    a = _correlation(vectors)
    a_sparse = sparsify_topk(a, k)
    a_bar = reweight(a_sparse, s)
    return normalize_graph(a_bar, tau_prime)


def write_graph(path, adjacency: np.ndarray, names) -> None:
    """Export an adjacency as UTF-8 text: header n, n rows of floats, n names."""
    adjacency = as_matrix(adjacency, "adjacency")
    n = adjacency.shape[0]
    if adjacency.shape[1] != n or len(names) != n:
        raise ValidationError("adjacency shape and name count disagree")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n}\n")
        for row in adjacency:
            fh.write(" ".join(f"{float(v):.17g}" for v in row) + "\n")
        for name in names:
            fh.write(f"{name}\n")


def read_graph(path):
    """Read an adjacency exported by write_graph; returns (matrix, names)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty graph file", line=1)
    try:
        n = int(lines[0])
    except ValueError:
        raise ParseError(f"expected row count, got {lines[0]!r}", line=1) from None
    if n < 1 or len(lines) < 1 + 2 * n:
        raise ParseError(f"expected {1 + 2 * n} lines for n={n}", line=len(lines) + 1)
    rows = []
    for i in range(n):
        tokens = lines[1 + i].split()
        if len(tokens) != n:
            raise ParseError(f"expected {n} entries, got {len(tokens)}", line=2 + i)
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            raise ParseError("non-numeric adjacency entry", line=2 + i) from None
    names = [lines[1 + n + i] for i in range(n)]
    return np.asarray(rows, dtype=np.float64), names
