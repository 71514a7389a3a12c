"""Dense float64 numerics shared by every other module.

All functions are pure, operate on plain numpy arrays, and validate their
inputs. Determinism matters more than speed here: given identical inputs on
one machine, every function returns bit-identical results, which is what the
reproducibility guarantees of the training pipeline rest on.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import (
    DegenerateRowError,
    DegenerateVectorError,
    NumericError,
    ParameterError,
    ProbeError,
    ShapeError,
)

# Clamp applied before every log-of-probability computation; keeps log(p)
# and log(1 - p) finite at saturated predictions.
PROB_EPS = 1e-7


def require_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D array, got ndim={arr.ndim}")
    return require_finite(arr, name)


def as_vector(a, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name}: expected a 1-D array, got ndim={arr.ndim}")
    return require_finite(arr, name)


def unit(v: np.ndarray, name: str = "vector") -> np.ndarray:
    """Return v scaled to unit norm; zero-norm input is an error."""
    v = as_vector(v, name)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise DegenerateVectorError(f"{name} has zero norm")
    return v / n


def normalize_rows(m, name: str = "matrix") -> np.ndarray:
    """Scale every row of m to unit norm; any zero row is an error."""
    m = as_matrix(m, name)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateVectorError(f"{name}: row {bad} has zero norm")
    return m / norms[:, None]


def matmul(a, b) -> np.ndarray:
    """Validated matrix product."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return require_finite(a @ b, "matmul result")


def cosine_sim(u, v) -> float:
    """Cosine similarity of two vectors with positive norm, in [-1, 1]."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise ShapeError(f"vectors differ in length: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("cosine similarity undefined for zero-norm input")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def masked_row_softmax(m, temperature: float) -> np.ndarray:
    """Row softmax restricted to the nonzero entries of each row.

    Zeros stay exactly zero; the nonzero entries of each row are replaced by
    exp(e / temperature) normalized to sum to one over that row.
    """
    m = as_matrix(m, "matrix")
    if not temperature > 0.0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    out = np.zeros_like(m)
    for i in range(m.shape[0]):
        nz = m[i] != 0.0
        if not nz.any():
            raise DegenerateRowError(f"row {i} is all zero")
        z = m[i, nz] / temperature
        z = np.exp(z - z.max())
        out[i, nz] = z / z.sum()
    return out


def sigmoid(x):
    """Numerically stable logistic function; scalar in -> float out."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow for |x| up to ~700."""
    arr = np.asarray(x, dtype=np.float64)
    out = -np.logaddexp(0.0, -arr)
    return float(out) if out.ndim == 0 else out


def log1m_sigmoid(x):
    """log(1 - sigmoid(x)) = log(sigmoid(-x)), computed stably."""
    arr = np.asarray(x, dtype=np.float64)
    out = -np.logaddexp(0.0, arr)
    return float(out) if out.ndim == 0 else out


def clamp_prob(p):
    """Clamp probabilities to [PROB_EPS, 1 - PROB_EPS] for safe logs."""
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def grad_check(
    f: Callable[[np.ndarray], float],
    analytic_grad,
    point,
    step: float = 1e-5,
) -> float:
    """Compare an analytic gradient against central finite differences.

    Returns the maximum componentwise relative error, with denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if not step > 0.0:
        raise ParameterError(f"step must be positive, got {step}")
    point = as_vector(point, "point")
    g = as_vector(analytic_grad, "analytic_grad")
    if g.shape != point.shape:
        raise ShapeError(f"gradient length {g.shape[0]} != point length {point.shape[0]}")
    numeric = np.empty_like(point)
    for i in range(point.size):
        xp = point.copy()
        xp[i] += step
        xm = point.copy()
        xm[i] -= step
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ProbeError(f"objective non-finite at probe for component {i}")
        numeric[i] = (fp - fm) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(g - numeric) / denom))
