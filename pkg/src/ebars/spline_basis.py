"""Clamped B-spline bases on [0, 1] and (tensor-product) design matrices.

Knot vectors are clamped: the boundary values 0 and 1 are repeated
``degree + 1`` times, so a vector with ``k`` interior knots spans a spline
space of dimension ``k + degree + 1``.  Evaluation is right-continuous at
interior breakpoints; ``x = 1`` belongs to the last non-empty interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot vector of a univariate spline space on [0, 1]."""

    degree: int
    interior: tuple[float, ...]

    @property
    def knots(self) -> np.ndarray:
        p = self.degree
        return np.concatenate([np.zeros(p + 1), np.asarray(self.interior, float), np.ones(p + 1)])

    @property
    def dimension(self) -> int:
        return len(self.interior) + self.degree + 1


def build_knot_vector(interior: Sequence[float], degree: int) -> KnotVector:
    """Build a clamped knot vector from sorted interior knots in (0, 1).

    >>> build_knot_vector([0.5], 1).knots
    array([0. , 0. , 0.5, 1. , 1. ])
    """
    if int(degree) != degree or degree < 0:
        raise ValueError(f"degree must be a non-negative integer, got {degree!r}")
    t = np.asarray(interior, dtype=float).ravel()
    if t.size and (np.any(t <= 0.0) or np.any(t >= 1.0)):
        raise ValueError("interior knots must lie strictly inside (0, 1)")
    if np.any(np.diff(t) < 0):
        raise ValueError("interior knots must be sorted non-decreasing")
    return KnotVector(int(degree), tuple(float(v) for v in t))


def _find_spans(knots: np.ndarray, p: int, x: np.ndarray) -> np.ndarray:
    # index s with knots[s] <= x < knots[s+1]; x == 1 maps to the last non-empty span
    s = np.searchsorted(knots, x, side="right") - 1
    last = len(knots) - p - 2
    return np.clip(s, p, last)


def _basis_nonzero(knots: np.ndarray, p: int, x: np.ndarray, span: np.ndarray) -> np.ndarray:
    """Values of the p+1 basis functions that can be nonzero on each span.

    Triangular Cox-de Boor scheme, vectorised over points.  Every
    denominator is knots[span+r+1] - knots[span+1-j+r] >= knots[span+1] -
    knots[span] > 0, so repeated knots never produce a 0/0.
    """
    n = x.shape[0]
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    left = np.empty((n, p + 1))
    right = np.empty((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - knots[span + 1 - j]
        right[:, j] = knots[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.divide(N[:, r], denom, out=np.zeros(n), where=denom > 0)
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def _check_unit_interval(x: np.ndarray) -> None:
    if x.size and (not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")


def design_matrix_1d(kv: KnotVector, xs) -> np.ndarray:
    """Dense m x (k + p + 1) matrix with entries b_j(x_i)."""
    x = np.asarray(xs, dtype=float).ravel()
    _check_unit_interval(x)
    p = kv.degree
    knots = kv.knots
    span = _find_spans(knots, p, x)
    vals = _basis_nonzero(knots, p, x, span)
    Z = np.zeros((x.shape[0], kv.dimension))
    cols = span[:, None] - p + np.arange(p + 1)[None, :]
    np.put_along_axis(Z, cols, vals, axis=1)
    return Z


def basis_at(kv: KnotVector, x: float) -> np.ndarray:
    """All basis values at a single point."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x = {x} outside [0, 1]")
    return design_matrix_1d(kv, [x])[0]


def row_kron(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product; the first factor's index varies slowest."""
    out = mats[0]
    for M in mats[1:]:
        out = (out[:, :, None] * M[:, None, :]).reshape(out.shape[0], -1)
    return out


def tensor_design_matrix(kvs: Sequence[KnotVector], X) -> np.ndarray:
    """Tensor-product design matrix.

    Column ``(j_1, ..., j_d)`` sits at the row-major (C order) position
    of that multi-index, so dimension 1 is the slowest-varying index.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != len(kvs):
        raise ValueError(f"X has {X.shape[1]} columns but {len(kvs)} knot vectors were given")
    return row_kron([design_matrix_1d(kv, X[:, i]) for i, kv in enumerate(kvs)])
