"""Posterior summaries and model-averaged prediction from a chain trace."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .dataset import Dataset
from .evidence import fit
from .sampler import ChainTrace
from .spline_basis import build_knot_vector, tensor_design_matrix


@dataclass
class KnotSummary:
    """Knot-number histogram plus a per-dimension knot intensity.

    The intensity integrates (over the real line) to the mean number of
    knots in that dimension; it is not a probability density.
    """

    counts: np.ndarray  # support of the total knot count
    probs: np.ndarray
    mean_k: float
    per_dim_mean: np.ndarray
    grid: np.ndarray | None = None
    intensity: list[np.ndarray] = field(default_factory=list)
    bandwidth: list[float] = field(default_factory=list)


def knot_number_histogram(trace: ChainTrace) -> KnotSummary:
    if len(trace) == 0:
        raise ValueError("empty trace")
    kt = trace.k_total
    support, freq = np.unique(kt, return_counts=True)
    return KnotSummary(
        counts=support,
        probs=freq / kt.size,
        mean_k=float(kt.mean()),
        per_dim_mean=trace.k.mean(axis=0),
    )


def pooled_locations(trace: ChainTrace, dim: int = 0) -> np.ndarray:
    eta = trace.grid.locations[dim]
    idx = [i for s in trace.states for i in s.indices[dim]]
    return eta[np.asarray(idx, dtype=int)]


def silverman_bandwidth(x: np.ndarray) -> float:
    """0.9 min(sd, IQR/1.34) N^(-1/5)."""
    n = x.size
    if n < 2:
        return 0.05
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if spread <= 0:
        return 0.05 * n ** -0.2
    return 0.9 * spread * n ** -0.2


@dataclass
class KnotIntensity:
    """Gaussian-kernel knot intensity for one dimension."""

    points: np.ndarray  # pooled sampled locations
    n_samples: int
    bandwidth: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.points.size == 0:
            return np.zeros_like(x)
        z = (x[..., None] - self.points) / self.bandwidth
        dens = np.exp(-0.5 * z * z).sum(axis=-1) / (self.bandwidth * math.sqrt(2 * math.pi))
        return dens / self.n_samples

    def integral(self, lo: float, hi: float) -> float:
        """Exact integral of the intensity over [lo, hi]."""
        if self.points.size == 0:
            return 0.0
        mass = ndtr((hi - self.points) / self.bandwidth) - ndtr((lo - self.points) / self.bandwidth)
        return float(mass.sum() / self.n_samples)


def knot_location_intensity(trace: ChainTrace, dim: int = 0, bandwidth: float | None = None) -> KnotIntensity:
    if len(trace) == 0:
        raise ValueError("empty trace")
    pts = pooled_locations(trace, dim)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(pts)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return KnotIntensity(pts, len(trace), float(bandwidth))


def window_counts(trace: ChainTrace, windows, dim: int = 0) -> np.ndarray:
    """Posterior expected number of knots inside each closed window [lo, hi]."""
    pts = pooled_locations(trace, dim)
    return np.array([np.count_nonzero((pts >= lo) & (pts <= hi)) for lo, hi in windows]) / len(trace)


def summarize(trace: ChainTrace, resolution: int = 201, bandwidth: float | None = None) -> KnotSummary:
    """Histogram plus intensity curves on a uniform grid over [0, 1]."""
    out = knot_number_histogram(trace)
    out.grid = np.linspace(0.0, 1.0, resolution)
    for dim in range(trace.grid.ndim):
        ki = knot_location_intensity(trace, dim, bandwidth)
        out.intensity.append(ki(out.grid))
        out.bandwidth.append(ki.bandwidth)
    return out


def estimate_knots_fixed_k(trace: ChainTrace, k_true, dim: int = 0) -> np.ndarray:
    """Position-wise mean of sorted knot locations over samples with k = k_true."""
    if np.isscalar(k_true):
        k_true = [int(k_true)] * trace.grid.ndim
    kt = tuple(int(v) for v in k_true)
    eta = trace.grid.locations[dim]
    rows = [eta[list(s.indices[dim])] for s in trace.states if s.k == kt]
    if not rows:
        raise ValueError(f"no samples with k = {kt}")
    return np.sort(np.mean(np.sort(np.asarray(rows), axis=1), axis=0))


@dataclass
class PredictionResult:
    X: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    n_skipped: int = 0


def predict(trace: ChainTrace, data: Dataset, X_new) -> PredictionResult:
    """Bayesian model average of m/(m+1) * Z_new beta_hat over the sampled states."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[:, None]
    m = data.m
    shrink = m / (m + 1)
    mean = np.zeros(X_new.shape[0])
    m2 = np.zeros(X_new.shape[0])
    used = skipped = 0
    for state, weight in Counter(trace.states).items():
        kvs = [
            build_knot_vector(eta[list(ix)], p)
            for eta, ix, p in zip(trace.grid.locations, state.indices, trace.degrees)
        ]
        res = fit(tensor_design_matrix(kvs, data.X), data.y)
        if res.rank_deficient:
            skipped += weight
            continue
        f = shrink * (tensor_design_matrix(kvs, X_new) @ res.beta_hat)
        # weighted Welford update
        used += weight
        delta = f - mean
        mean += delta * (weight / used)
        m2 += weight * delta * (f - mean)
    if used == 0:
        raise ValueError("every sampled state is rank-deficient")
    return PredictionResult(X_new, mean, np.sqrt(np.maximum(m2 / used, 0.0)), skipped)
