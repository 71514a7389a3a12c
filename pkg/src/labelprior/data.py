"""Datasets, file formats, incomplete-label masking, and the synthetic
generator with planted label co-occurrence.

Feature-space augmentation stands in for image transforms: the weak view
adds small Gaussian noise, the strong view applies coordinate dropout plus
larger noise; both are renormalized to the unit sphere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateVectorError,
    MaskingError,
    ParameterError,
    ParseError,
    ValidationError,
)
from .numerics import as_matrix, unit
from .prior import LabelEmbeddings


@dataclass(frozen=True)
class Sample:
    """One training example: base feature, its two views, and labels.

    y entries: +1 annotated positive, 0 annotated negative, -1 unknown.
    y_full, when present, is the fully annotated ground truth used only for
    evaluation and precision tracking.
    """

    f_base: np.ndarray
    f_weak: np.ndarray
    f_strong: np.ndarray
    y: np.ndarray
    y_full: Optional[np.ndarray] = None


@dataclass
class Dataset:
    """Column-stacked samples; rows align across all arrays."""

    label_names: list[str]
    f_base: np.ndarray
    f_weak: np.ndarray
    f_strong: np.ndarray
    y: np.ndarray
    y_full: Optional[np.ndarray] = None

    def __post_init__(self):
        self.f_base = as_matrix(self.f_base, "f_base")
        self.f_weak = as_matrix(self.f_weak, "f_weak")
        self.f_strong = as_matrix(self.f_strong, "f_strong")
        self.y = np.asarray(self.y, dtype=np.int8)
        m, d = self.f_base.shape
        n = len(self.label_names)
        if self.f_weak.shape != (m, d) or self.f_strong.shape != (m, d):
            raise ValidationError("feature arrays disagree in shape")
        if self.y.shape != (m, n):
            raise ValidationError(f"labels must be {m}x{n}, got {self.y.shape}")
        if not np.isin(self.y, (-1, 0, 1)).all():
            raise ValidationError("labels must take values in {-1, 0, +1}")
        if self.y_full is not None:
            self.y_full = np.asarray(self.y_full, dtype=np.int8)
            if self.y_full.shape != (m, n):
                raise ValidationError("y_full shape mismatch")
            if not np.isin(self.y_full, (-1, 0, 1)).all():
                raise ValidationError("y_full must take values in {-1, 0, +1}")

    def __len__(self) -> int:
        return self.f_base.shape[0]

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    @property
    def dim(self) -> int:
        return self.f_base.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(
            f_base=self.f_base[i],
            f_weak=self.f_weak[i],
            f_strong=self.f_strong[i],
            y=self.y[i],
            y_full=None if self.y_full is None else self.y_full[i],
        )

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            label_names=list(self.label_names),
            f_base=self.f_base[idx].copy(),
            f_weak=self.f_weak[idx].copy(),
            f_strong=self.f_strong[idx].copy(),
            y=self.y[idx].copy(),
            y_full=None if self.y_full is None else self.y_full[idx].copy(),
        )


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# embedding file format


def write_embeddings(path, emb: LabelEmbeddings) -> None:
    """Text format: header `<n> <d>`, then one `<name> <d floats>` line per
    label, floats at 17 significant digits (exact float64 round trip)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{emb.n_labels} {emb.dim}\n")
        for name, row in zip(emb.names, emb.vectors):
            fh.write(name + " " + " ".join(f"{float(v):.17g}" for v in row) + "\n")


def read_embeddings(path) -> LabelEmbeddings:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty embedding file", line=1)
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError("expected header `<n> <d>`", line=1)
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("non-integer header", line=1) from None
    if n < 2 or d < 1:
        raise ParseError(f"invalid dimensions n={n} d={d}", line=1)
    if len(lines) < 1 + n:
        raise ParseError(f"expected {n} embedding rows", line=len(lines) + 1)
    names = []
    rows = []
    for i in range(n):
        lineno = 2 + i
        tokens = lines[1 + i].split()
        if len(tokens) != 1 + d:
            raise ParseError(
                f"row {i} ({tokens[0] if tokens else '?'}): expected {d} values, got {len(tokens) - 1}",
                line=lineno,
            )
        try:
            rows.append([float(t) for t in tokens[1:]])
        except ValueError:
            raise ParseError(f"row {i}: non-numeric value", line=lineno) from None
        names.append(tokens[0])
    for extra in range(1 + n, len(lines)):
        if lines[extra].strip():
            raise ParseError("unexpected content after embedding rows", line=extra + 1)
    if len(set(names)) != n:
        raise ValidationError("duplicate label names in embedding file")
    return LabelEmbeddings(names, np.asarray(rows, dtype=np.float64))


# ---------------------------------------------------------------------------
# dataset file format


def write_dataset(path, ds: Dataset) -> None:
    """One JSON record per line after a header of
    `<n_samples> <n_labels> <d>` followed by the label names."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"{len(ds)} {ds.n_labels} {ds.dim} " + " ".join(ds.label_names) + "\n"
        )
        for i in range(len(ds)):
            rec = {
                "f_base": [float(v) for v in ds.f_base[i]],
                "f_weak": [float(v) for v in ds.f_weak[i]],
                "f_strong": [float(v) for v in ds.f_strong[i]],
                "y": [int(v) for v in ds.y[i]],
            }
            if ds.y_full is not None:
                rec["y_full"] = [int(v) for v in ds.y_full[i]]
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty dataset file", line=1)
    header = lines[0].split()
    if len(header) < 3:
        raise ParseError("expected header `<m> <n> <d> <names...>`", line=1)
    try:
        m, n, d = int(header[0]), int(header[1]), int(header[2])
    except ValueError:
        raise ParseError("non-integer header", line=1) from None
    names = header[3:]
    if len(names) != n:
        raise ParseError(f"expected {n} label names, got {len(names)}", line=1)
    if len(lines) < 1 + m:
        raise ParseError(f"expected {m} records", line=len(lines) + 1)
    f_base, f_weak, f_strong, ys, yf = [], [], [], [], []
    for i in range(m):
        lineno = 2 + i
        try:
            rec = json.loads(lines[1 + i])
        except json.JSONDecodeError:
            raise ParseError("malformed record", line=lineno) from None
        for key in ("f_base", "f_weak", "f_strong", "y"):
            if key not in rec:
                raise ParseError(f"record missing field {key!r}", line=lineno)
        for key, width in (("f_base", d), ("f_weak", d), ("f_strong", d), ("y", n)):
            if len(rec[key]) != width:
                raise ParseError(
                    f"field {key!r} has length {len(rec[key])}, expected {width}",
                    line=lineno,
                )
        f_base.append(rec["f_base"])
        f_weak.append(rec["f_weak"])
        f_strong.append(rec["f_strong"])
        ys.append(rec["y"])
        if "y_full" in rec:
            if len(rec["y_full"]) != n:
                raise ParseError("field 'y_full' has wrong length", line=lineno)
            yf.append(rec["y_full"])
    if yf and len(yf) != m:
        raise ValidationError("y_full present in only some records")
    return Dataset(
        label_names=names,
        f_base=np.asarray(f_base, dtype=np.float64),
        f_weak=np.asarray(f_weak, dtype=np.float64),
        f_strong=np.asarray(f_strong, dtype=np.float64),
        y=np.asarray(ys, dtype=np.int8),
        y_full=np.asarray(yf, dtype=np.int8) if yf else None,
    )


# ---------------------------------------------------------------------------
# incomplete-label masking


def mask_single_positive(y_full, seed) -> np.ndarray:
    """Keep exactly one uniformly chosen positive; everything else becomes
    unknown (-1)."""
    rng = _rng(seed)
    y_full = np.asarray(y_full, dtype=np.int8)
    positives = np.flatnonzero(y_full == 1)
    if positives.size == 0:
        raise MaskingError("cannot mask a label vector with no positives")
    keep = positives[int(rng.integers(positives.size))]
    y = np.full_like(y_full, -1)
    y[keep] = 1
    return y


def mask_partial(y_full, ratio: float, seed) -> np.ndarray:
    """Keep a uniformly chosen round(ratio * n) of the annotations; the rest
    become unknown (-1)."""
    if not 0.0 < ratio <= 1.0:
        raise ParameterError(f"ratio must lie in (0, 1], got {ratio}")
    rng = _rng(seed)
    y_full = np.asarray(y_full, dtype=np.int8)
    n = y_full.size
    k = int(round(ratio * n))
    keep = rng.choice(n, size=k, replace=False)
    y = np.full_like(y_full, -1)
    y[keep] = y_full[keep]
    return y


def mask_dataset_single_positive(ds: Dataset, seed) -> Dataset:
    """Apply the single-positive mask to every sample; keeps y_full."""
    if ds.y_full is None:
        raise MaskingError("dataset has no ground truth to mask")
    rng = _rng(seed)
    y = np.stack([mask_single_positive(ds.y_full[i], rng) for i in range(len(ds))])
    out = ds.subset(np.arange(len(ds)))
    out.y = y
    return out

def mask_dataset_partial(ds: Dataset, ratio: float, seed) -> Dataset:
    """Apply the partial mask to every sample; keeps y_full."""
    if ds.y_full is None:
        raise MaskingError("dataset has no ground truth to mask")
    rng = _rng(seed)
    y = np.stack([mask_partial(ds.y_full[i], ratio, rng) for i in range(len(ds))])
    out = ds.subset(np.arange(len(ds)))
    out.y = y
    return out


# ---------------------------------------------------------------------------
# feature-space augmentation


def augment(
    f_base,
    seed,
    sigma_weak: float = 0.05,
    sigma_strong: float = 0.2,
    dropout_strong: float = 0.2,
):
    """Weak view: additive Gaussian noise. Strong view: coordinate dropout
    plus larger noise. Both renormalized to unit norm. An all-zero dropout
    outcome is resampled."""
    if sigma_weak < 0.0 or sigma_strong < 0.0:
        raise ParameterError("noise scales must be nonnegative")
    if not 0.0 <= dropout_strong < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {dropout_strong}")
    rng = _rng(seed)
    base = unit(np.asarray(f_base, dtype=np.float64), "f_base")
    d = base.size
    weak = unit(base + rng.normal(0.0, 1.0, d) * sigma_weak, "weak view")
    while True:
        keep = rng.random(d) >= dropout_strong
        dropped = base * keep
        if np.any(dropped != 0.0):
            break
    strong = unit(dropped + rng.normal(0.0, 1.0, d) * sigma_strong, "strong view")
    return weak, strong


# ---------------------------------------------------------------------------
# synthetic data with planted co-occurrence


def cooccurrence_counts(y_full) -> np.ndarray:
    """Pairwise positive co-occurrence counts; the diagonal holds per-class
    positive counts."""
    pos = (np.asarray(y_full) == 1).astype(np.float64)
    return pos.T @ pos


def synth_generate(
    n_labels: int = 20,
    dim: int = 64,
    n_clusters: int = 4,
    n_samples: int = 2000,
    noise: float = 0.5,
    seed: int = 0,
    p_in: float = 0.5,
    p_out: float = 0.02,
    sigma_weak: float = 0.05,
    sigma_strong: float = 0.2,
    dropout_strong: float = 0.2,
    cluster_spread: float = 1.0,
):
    """Generate a dataset whose label co-occurrence follows planted clusters.

    Each label owns a latent direction: its cluster center (a unit vector)
    plus cluster_spread times unit noise, renormalized. Features are built
    from these latent directions; the emitted label embeddings are noisy
    observations of them (latent direction plus `noise` times unit noise,
    renormalized), so the embeddings carry the co-occurrence structure the
    prior graph exploits while leaving the model real headroom to learn.

    Per sample: draw a cluster, mark in-cluster labels positive with
    probability p_in and out-cluster labels with p_out (at least one
    positive enforced); the base feature is the renormalized mean of the
    positive labels' latent directions plus noise. With noise = 0 the
    embeddings equal the latent directions and a single-positive sample's
    feature equals that label's embedding exactly.

    Returns (Dataset, LabelEmbeddings, co-occurrence counts); y starts
    fully annotated (equal to y_full).
    """
    if n_labels < 2:
        raise ParameterError(f"need at least 2 labels, got {n_labels}")
    if not 1 <= n_clusters <= n_labels:
        raise ParameterError(
            f"n_clusters must lie in [1, {n_labels}], got {n_clusters}"
        )
    if n_samples < 1:
        raise ParameterError(f"need at least 1 sample, got {n_samples}")
    if dim < 1:
        raise ParameterError(f"need dim >= 1, got {dim}")
    if noise < 0.0:
        raise ParameterError(f"noise must be nonnegative, got {noise}")
    if cluster_spread < 0.0:
        raise ParameterError(f"cluster_spread must be nonnegative, got {cluster_spread}")
    if not 0.0 <= p_in <= 1.0 or not 0.0 <= p_out <= 1.0:
        raise ParameterError("p_in and p_out must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    def unit_noise() -> np.ndarray:
        g = rng.normal(0.0, 1.0, dim)
        return g / np.linalg.norm(g)

    centers = np.stack([unit_noise() for _ in range(n_clusters)])
    assign = np.arange(n_labels) * n_clusters // n_labels
    latent = np.empty((n_labels, dim))
    vectors = np.empty((n_labels, dim))
    for i in range(n_labels):
        latent[i] = centers[assign[i]] + cluster_spread * unit_noise()
        latent[i] /= np.linalg.norm(latent[i])
        vectors[i] = latent[i] + noise * unit_noise()
        vectors[i] /= np.linalg.norm(vectors[i])
    names = [f"label_{i:02d}" for i in range(n_labels)]
    emb = LabelEmbeddings(names, vectors)

    f_base = np.empty((n_samples, dim))
    f_weak = np.empty((n_samples, dim))
    f_strong = np.empty((n_samples, dim))
    y_full = np.zeros((n_samples, n_labels), dtype=np.int8)
    for j in range(n_samples):
        k = int(rng.integers(n_clusters))
        members = np.flatnonzero(assign == k)
        draws = rng.random(n_labels)
        pos = np.where(assign == k, draws < p_in, draws < p_out)
        if not pos.any():
            pos[members[int(rng.integers(members.size))]] = True
        y_full[j, pos] = 1
        f = latent[pos].mean(axis=0) + noise * unit_noise()
        norm = np.linalg.norm(f)
        if norm == 0.0:
            raise DegenerateVectorError(f"sample {j} collapsed to the origin")
        f_base[j] = f / norm
        f_weak[j], f_strong[j] = augment(
            f_base[j], rng, sigma_weak, sigma_strong, dropout_strong
        )

    ds = Dataset(
        label_names=names,
        f_base=f_base,
        f_weak=f_weak,
        f_strong=f_strong,
        y=y_full.copy(),
        y_full=y_full,
    )
    return ds, emb, cooccurrence_counts(y_full)


def synth_experiment(
    n_train: int = 2000,
    n_test: int = 500,
    seed: int = 0,
    **kwargs,
):
    """Coherent train/test pair sharing one set of label embeddings.

    Returns (train Dataset, test Dataset, LabelEmbeddings, train
    co-occurrence counts); both splits start fully annotated.
    """
    ds, emb, _ = synth_generate(n_samples=n_train + n_test, seed=seed, **kwargs)
    train = ds.subset(np.arange(n_train))
    test = ds.subset(np.arange(n_train, n_train + n_test))
    return train, test, emb, cooccurrence_counts(train.y_full)
