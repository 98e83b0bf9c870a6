"""Two-stage manifold estimation: ISOMAP embedding, then spline reconstruction.

Stage one maps the noisy cloud to coordinates u_i in [0, 1]^d; stage two
regresses every ambient coordinate on u with the knot sampler and
predicts at u_i, giving the denoised cloud.  GMSD is the mean squared
distance from points to a known manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

from .dataset import Dataset
from .inference import predict
from .sampler import ChainConfig, ChainTrace, run

# stand-in weight for zero-length edges (csgraph drops explicit zeros)
_MIN_EDGE = 1e-300


class DisconnectedGraphError(ValueError):
    def __init__(self, sizes):
        self.sizes = sorted((int(s) for s in sizes), reverse=True)
        super().__init__(
            f"k-NN graph has {len(self.sizes)} connected components of sizes {self.sizes}; "
            "increase the neighbor count"
        )


@dataclass
class Embedding:
    coords: np.ndarray  # m x d, rescaled to [0, 1]^d
    neighbors: int
    eigenvalues: np.ndarray
    lower: np.ndarray  # per-coordinate min/max before rescaling
    upper: np.ndarray


def knn_graph(points: np.ndarray, neighbors: int):
    """Symmetrised Euclidean k-NN graph as a sparse matrix."""
    m = points.shape[0]
    if neighbors < 1 or neighbors >= m:
        raise ValueError(f"neighbors must lie in [1, {m - 1}]")
    dist, idx = cKDTree(points).query(points, k=neighbors + 1)
    rows = np.repeat(np.arange(m), neighbors)
    cols = idx[:, 1:].ravel()
    w = np.maximum(dist[:, 1:].ravel(), _MIN_EDGE)
    G = coo_matrix((w, (rows, cols)), shape=(m, m)).tocsr()
    return G.maximum(G.T)


def classical_mds(D: np.ndarray, d: int):
    """Top-d classical MDS coordinates from a distance matrix.

    Sign convention: each eigenvector's first entry with magnitude above
    1e-12 is made positive.
    """
    m = D.shape[0]
    D2 = D * D
    B = -0.5 * (D2 - D2.mean(axis=0)[None, :] - D2.mean(axis=1)[:, None] + D2.mean())
    vals, vecs = scipy.linalg.eigh(B, subset_by_index=[m - d, m - 1])
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    for j in range(d):
        nz = np.flatnonzero(np.abs(vecs[:, j]) > 1e-12)
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs * np.sqrt(np.maximum(vals, 0.0)), vals


def isomap(points, neighbors: int = 10, d: int = 1) -> Embedding:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be an m x D array")
    m, D = points.shape
    if d > D or m < d + 2:
        raise ValueError("need d <= D and m >= d + 2")
    G = knn_graph(points, neighbors)
    ncomp, labels = connected_components(G, directed=False)
    if ncomp > 1:
        raise DisconnectedGraphError(np.bincount(labels))
    geo = shortest_path(G, method="D", directed=False)
    Y, vals = classical_mds(geo, d)
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return Embedding((Y - lo) / span, neighbors, vals, lo, hi)


def reconstruct(embedding: Embedding, points, config: ChainConfig):
    """Fit every ambient coordinate on the embedding; return (denoised, traces).

    Coordinate l uses seed ``SeedSequence(config.seed).spawn(D)[l]``.
    """
    points = np.asarray(points, dtype=float)
    U = embedding.coords
    if U.shape[0] != points.shape[0]:
        raise ValueError("embedding and points are not aligned")
    D = points.shape[1]
    seeds = np.random.SeedSequence(config.seed).spawn(D)
    out = np.empty_like(points)
    traces: list[ChainTrace] = []
    for col in range(D):
        cfg = replace(config, seed=int(seeds[col].generate_state(1)[0]))
        data = Dataset(U, points[:, col])
        trace = run(data, cfg)
        out[:, col] = predict(trace, data, U).mean
        traces.append(trace)
    return out, traces


def tsme(points, config: ChainConfig, neighbors: int = 10, d: int = 1):
    emb = isomap(points, neighbors, d)
    denoised, traces = reconstruct(emb, points, config)
    return denoised, emb, traces


@dataclass
class ManifoldOracle:
    """Nearest-point queries against a parametric manifold.

    ``param`` maps an (N, d) parameter array to (N, D) points and ``jac``
    to its (N, D, d) Jacobian.  A dense parameter lattice seeds a k-d tree;
    each query is then polished by projected Gauss-Newton inside the box.
    """

    param: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    resolution: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, float))
        self.upper = np.atleast_1d(np.asarray(self.upper, float))
        axes = [np.linspace(lo, hi, r) for lo, hi, r in zip(self.lower, self.upper, self.resolution)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self._params = np.stack([g.ravel() for g in mesh], axis=1)
        self._tree = cKDTree(self.param(self._params))

    def nearest(self, points, iters: int = 20):
        """(distances, parameters) of the closest manifold points."""
        X = np.asarray(points, dtype=float)
        _, idx = self._tree.query(X)
        th = self._params[idx].copy()
        best = np.linalg.norm(self.param(th) - X, axis=1)
        for _ in range(iters):
            r = self.param(th) - X
            J = self.jac(th)
            JtJ = np.einsum("nki,nkj->nij", J, J)
            Jtr = np.einsum("nki,nk->ni", J, r)
            step = np.linalg.solve(JtJ + 1e-12 * np.eye(JtJ.shape[1]), Jtr[..., None])[..., 0]
            cand = np.clip(th - step, self.lower, self.upper)
            dist = np.linalg.norm(self.param(cand) - X, axis=1)
            better = dist < best
            th[better], best[better] = cand[better], dist[better]
            if not better.any():
                break
        return best, th

    def distance(self, points) -> np.ndarray:
        return self.nearest(points)[0]


def gmsd(points, oracle: ManifoldOracle) -> float:
    """Mean squared distance from the points to the manifold."""
    d = oracle.distance(points)
    return float(np.mean(d * d))


# -- built-in manifolds -------------------------------------------------------

SPIRAL = dict(a=1.0, b=0.5, t_max=4 * math.pi)
SWISS_ROLL = dict(t_min=1.5 * math.pi, t_max=3.0 * math.pi, h_max=15.0)


def spiral_oracle(a=SPIRAL["a"], b=SPIRAL["b"], t_max=SPIRAL["t_max"], resolution=100_000) -> ManifoldOracle:
    """Archimedean spiral r(t) = a + b t, t in [0, t_max], in the plane."""

    def param(th):
        t = th[:, 0]
        r = a + b * t
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)

    def jac(th):
        t = th[:, 0]
        r = a + b * t
        J = np.stack([b * np.cos(t) - r * np.sin(t), b * np.sin(t) + r * np.cos(t)], axis=1)
        return J[:, :, None]

    return ManifoldOracle(param, jac, [0.0], [t_max], (resolution,), "spiral")


def swiss_roll_oracle(t_min=SWISS_ROLL["t_min"], t_max=SWISS_ROLL["t_max"], h_max=SWISS_ROLL["h_max"],
                      resolution=(400, 400)) -> ManifoldOracle:
    """Swiss roll (t cos t, h, t sin t), t in [t_min, t_max], h in [0, h_max]."""

    def param(th):
        t, h = th[:, 0], th[:, 1]
        return np.stack([t * np.cos(t), h, t * np.sin(t)], axis=1)

    def jac(th):
        t = th[:, 0]
        n = t.shape[0]
        J = np.zeros((n, 3, 2))
        J[:, 0, 0] = np.cos(t) - t * np.sin(t)
        J[:, 2, 0] = np.sin(t) + t * np.cos(t)
        J[:, 1, 1] = 1.0
        return J

    return ManifoldOracle(param, jac, [t_min, 0.0], [t_max, h_max], resolution, "swiss_roll")


def segment_oracle(start, end, resolution=1001) -> ManifoldOracle:
    """Straight segment from ``start`` to ``end``."""
    p0 = np.asarray(start, float)
    v = np.asarray(end, float) - p0

    def param(th):
        return p0[None, :] + th[:, :1] * v[None, :]

    def jac(th):
        return np.broadcast_to(v[None, :, None], (th.shape[0], v.size, 1)).copy()

    return ManifoldOracle(param, jac, [0.0], [1.0], (resolution,), "segment")


BUILTIN_ORACLES = {"spiral": spiral_oracle, "swiss_roll": swiss_roll_oracle}
