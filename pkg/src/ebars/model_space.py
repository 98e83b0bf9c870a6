"""Candidate knot grids, knot priors and the birth/death/relocation proposal."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

BIRTH, DEATH, RELOCATE = "birth", "death", "relocate"
MOVE_KINDS = (BIRTH, DEATH, RELOCATE)


@dataclass(frozen=True)
class CandidateGrid:
    """Per-dimension strictly increasing candidate knot locations in (0, 1)."""

    locations: tuple[np.ndarray, ...]

    def __post_init__(self):
        for eta in self.locations:
            if eta.ndim != 1 or eta.size == 0:
                raise ValueError("each candidate set must be a non-empty 1-d array")
            if np.any(eta <= 0.0) or np.any(eta >= 1.0):
                raise ValueError("candidate knots must lie strictly inside (0, 1)")
            if np.any(np.diff(eta) <= 0):
                raise ValueError("candidate knots must be strictly increasing")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(eta.size) for eta in self.locations)

    @property
    def ndim(self) -> int:
        return len(self.locations)


def make_uniform_grid(n: Sequence[int] | int) -> CandidateGrid:
    """Equally spaced candidates j / (n_i + 1), j = 1..n_i, per dimension."""
    if np.isscalar(n):
        n = (int(n),)
    locs = []
    for ni in n:
        if int(ni) != ni or ni < 1:
            raise ValueError(f"grid sizes must be positive integers, got {ni!r}")
        ni = int(ni)
        locs.append(np.arange(1, ni + 1) / (ni + 1))
    return CandidateGrid(tuple(locs))


@dataclass(frozen=True)
class KnotState:
    """Selected candidate indices per dimension (each tuple sorted, distinct)."""

    indices: tuple[tuple[int, ...], ...]

    @property
    def k(self) -> tuple[int, ...]:
        return tuple(len(ix) for ix in self.indices)

    @property
    def total(self) -> int:
        return sum(self.k)

    def locations(self, grid: CandidateGrid) -> tuple[np.ndarray, ...]:
        return tuple(eta[list(ix)] for eta, ix in zip(grid.locations, self.indices))

    def validate(self, grid: CandidateGrid) -> None:
        if len(self.indices) != grid.ndim:
            raise ValueError("state and grid disagree on the number of dimensions")
        for ix, ni in zip(self.indices, grid.sizes):
            if list(ix) != sorted(set(ix)):
                raise ValueError(f"indices {ix} are not sorted and distinct")
            if ix and (ix[0] < 0 or ix[-1] >= ni):
                raise ValueError(f"indices {ix} out of range for a grid of size {ni}")

    def replace(self, dim: int, ix) -> KnotState:
        new = list(self.indices)
        new[dim] = tuple(sorted(int(i) for i in ix))
        return KnotState(tuple(new))


def log_tau(k: Sequence[int], n: Sequence[int]) -> float:
    """log of the model-space size prod_i C(n_i, k_i)."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(k < 0) or np.any(k > n):
        raise ValueError("need 0 <= k_i <= n_i")
    return float(np.sum(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)))


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")


def log_prior_state(k: Sequence[int], n: Sequence[int], gamma: float) -> float:
    """Unnormalised log pi(k, xi) = -gamma * log tau(M_k)."""
    _check_gamma(gamma)
    if gamma == 0.0:
        return 0.0
    return -gamma * log_tau(k, n)


def log_prior_knot_number(k: int, n: int, gamma: float) -> float:
    """Unnormalised log pi(k) = (1 - gamma) * log C(n, k) for one dimension."""
    _check_gamma(gamma)
    return (1.0 - gamma) * log_tau([k], [n])


@dataclass(frozen=True)
class MoveProbabilities:
    birth: float
    death: float
    relocate: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.birth, self.death, self.relocate)


def move_probabilities(k: int, n: int, gamma: float, c: float) -> MoveProbabilities:
    """Birth/death/relocation probabilities for a dimension holding k of n candidates.

    b_k = c min(1, ((n-k)/(k+1))^(1-gamma)), d_k = c min(1, (k/(n-k+1))^(1-gamma)).
    Birth is forced to 0 at k = n and death to 0 at k = 0; at gamma = 1 the
    formulas alone would give 0**0 = 1 there.
    """
    _check_gamma(gamma)
    if not 0.0 < c < 0.5:
        raise ValueError(f"c must lie in (0, 0.5), got {c}")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    e = 1.0 - gamma
    b = 0.0 if k == n else c * min(1.0, ((n - k) / (k + 1)) ** e)
    d = 0.0 if k == 0 else c * min(1.0, (k / (n - k + 1)) ** e)
    return MoveProbabilities(b, d, 1.0 - b - d)


@dataclass(frozen=True)
class Proposal:
    """A candidate move.

    ``state`` is None when the drawn move has no valid target (relocation
    with an empty complement, birth past the cap); the step then
    self-rejects.  ``log_q_forward``/``log_q_reverse`` are the proposal
    log-densities q(s'|s) and q(s|s').
    """

    state: KnotState | None
    kind: str
    dim: int
    log_q_forward: float = math.nan
    log_q_reverse: float = math.nan

    @property
    def possible(self) -> bool:
        return self.state is not None


def _move_probs_for(k: int, n: int, gamma: float, c: float, fixed_k: bool) -> MoveProbabilities:
    if fixed_k:
        return MoveProbabilities(0.0, 0.0, 1.0)
    return move_probabilities(k, n, gamma, c)


def log_proposal_density(
    src: KnotState,
    dst: KnotState,
    grid: CandidateGrid,
    gamma: float,
    c: float,
    fixed_k: bool = False,
) -> float:
    """log q(dst | src) for states that differ by one birth, death or swap in one dimension."""
    diff = [i for i, (a, b) in enumerate(zip(src.indices, dst.indices)) if a != b]
    if len(diff) != 1:
        return -math.inf
    j = diff[0]
    d = grid.ndim
    n = grid.sizes[j]
    a, b = set(src.indices[j]), set(dst.indices[j])
    k = len(a)
    mp = _move_probs_for(k, n, gamma, c, fixed_k)
    if b > a and len(b - a) == 1:
        p = mp.birth / (n - k)
    elif a > b and len(a - b) == 1:
        p = mp.death / k
    elif len(a) == len(b) and len(a - b) == 1:
        p = mp.relocate / (k * (n - k))
    else:
        return -math.inf
    return math.log(p / d) if p > 0 else -math.inf


def propose(
    state: KnotState,
    grid: CandidateGrid,
    gamma: float,
    c: float,
    rng: np.random.Generator,
    fixed_k: bool = False,
    k_max: Sequence[int] | None = None,
) -> Proposal:
    """Draw one birth, death or relocation move in a uniformly chosen dimension."""
    d = grid.ndim
    j = int(rng.integers(d))
    n = grid.sizes[j]
    cur = state.indices[j]
    k = len(cur)
    mp = _move_probs_for(k, n, gamma, c, fixed_k)
    u = rng.random()
    if u < mp.birth:
        kind = BIRTH
    elif u < mp.birth + mp.death:
        kind = DEATH
    else:
        kind = RELOCATE

    used = np.asarray(cur, dtype=int)
    if kind == BIRTH:
        if k_max is not None and k >= k_max[j]:
            return Proposal(None, kind, j)
        free = np.setdiff1d(np.arange(n), used, assume_unique=True)
        new = cur + (int(free[rng.integers(free.size)]),)
    elif kind == DEATH:
        drop = int(rng.integers(k))
        new = cur[:drop] + cur[drop + 1 :]
    else:
        if k == 0 or k == n:
            return Proposal(None, kind, j)
        free = np.setdiff1d(np.arange(n), used, assume_unique=True)
        drop = int(rng.integers(k))
        add = int(free[rng.integers(free.size)])
        new = cur[:drop] + cur[drop + 1 :] + (add,)
    dst = state.replace(j, new)
    fwd = log_proposal_density(state, dst, grid, gamma, c, fixed_k)
    rev = log_proposal_density(dst, state, grid, gamma, c, fixed_k)
    return Proposal(dst, kind, j, fwd, rev)


def initial_state(
    grid: CandidateGrid, rng: np.random.Generator, k: Sequence[int] | None = None
) -> KnotState:
    """Uniformly random start with k_i knots per dimension (default one each)."""
    if k is None:
        k = [1] * grid.ndim
    out = []
    for ki, ni in zip(k, grid.sizes):
        if ki > ni:
            raise ValueError(f"cannot place {ki} knots on {ni} candidates")
        out.append(tuple(sorted(int(v) for v in rng.choice(ni, size=ki, replace=False))))
    return KnotState(tuple(out))
