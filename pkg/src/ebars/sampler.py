"""Reversible-jump Metropolis-Hastings over knot configurations.

Prior and proposal terms cancel in the acceptance ratio, leaving

    exact: log alpha = min(0, (nu - nu')/2 log(m+1) + m/2 (log a - log a'))
    ebic:  log alpha = min(0, (nu - nu')/2 log m   + m/2 (log s2 - log s2'))

A rejected step keeps the current state and still records it.  The
``literal_rejection`` flag instead re-proposes until a move is accepted;
it exists for comparison only and does not target the posterior.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset
from .evidence import ModelFit, draw_beta_sigma, fit, log_posterior_ebic, log_posterior_exact
from .model_space import (
    MOVE_KINDS,
    CandidateGrid,
    KnotState,
    initial_state,
    make_uniform_grid,
    propose,
)
from .spline_basis import build_knot_vector, design_matrix_1d, row_kron

log = logging.getLogger(__name__)

MODES = ("exact", "ebic")
_KIND_CODE = {kind: i for i, kind in enumerate(MOVE_KINDS)}


class InitializationError(RuntimeError):
    """No full-rank starting state could be found."""


@dataclass(frozen=True)
class ChainConfig:
    gamma: float = 1.0
    c: float = 0.4
    burnin: int = 5000
    steps: int = 5000
    thin: int = 1
    mode: str = "exact"
    seed: int = 0
    fixed_k: tuple[int, ...] | None = None
    candidates: tuple[int, ...] = (100,)
    degrees: tuple[int, ...] = (3,)
    k_max: tuple[int, ...] | None = None
    draw_coefficients: bool = False
    literal_rejection: bool = False

    def validate(self, d: int | None = None) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.c < 0.5:
            raise ValueError(f"c must lie in (0, 0.5), got {self.c}")
        if self.burnin < 0 or self.steps < 1 or self.thin < 1:
            raise ValueError("need burnin >= 0, steps >= 1, thin >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if len(self.candidates) != len(self.degrees):
            raise ValueError("candidates and degrees must have one entry per dimension")
        if d is not None and len(self.degrees) != d:
            raise ValueError(f"config is for {len(self.degrees)} dimensions, data has {d}")
        if any(p < 0 for p in self.degrees) or any(n < 1 for n in self.candidates):
            raise ValueError("degrees must be >= 0 and candidate sizes >= 1")
        if self.fixed_k is not None:
            if len(self.fixed_k) != len(self.candidates):
                raise ValueError("fixed_k needs one entry per dimension")
            if any(not 0 <= k <= n for k, n in zip(self.fixed_k, self.candidates)):
                raise ValueError("fixed_k entries must lie in [0, n_i]")
        if self.k_max is not None and len(self.k_max) != len(self.candidates):
            raise ValueError("k_max needs one entry per dimension")

    def to_dict(self) -> dict:
        return asdict(self)


class KnotModel:
    """Design matrices, fits and log-posteriors for knot states on one dataset.

    Fits are memoised per state; per-dimension design blocks are memoised
    separately so a move in one dimension only rebuilds that block.
    """

    def __init__(self, data: Dataset, grid: CandidateGrid, degrees, gamma: float, mode: str,
                 cache_size: int = 4096):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.data = data
        self.grid = grid
        self.degrees = tuple(int(p) for p in degrees)
        self.gamma = gamma
        self.mode = mode
        self.cache_size = cache_size
        self._fits: OrderedDict[KnotState, ModelFit] = OrderedDict()
        self._blocks: OrderedDict[tuple, np.ndarray] = OrderedDict()

    def knot_vectors(self, state: KnotState):
        return [
            build_knot_vector(eta[list(ix)], p)
            for eta, ix, p in zip(self.grid.locations, state.indices, self.degrees)
        ]

    def _block(self, dim: int, ix: tuple[int, ...]) -> np.ndarray:
        key = (dim, ix)
        Z = self._blocks.get(key)
        if Z is None:
            kv = build_knot_vector(self.grid.locations[dim][list(ix)], self.degrees[dim])
            Z = design_matrix_1d(kv, self.data.X[:, dim])
            self._blocks[key] = Z
            if len(self._blocks) > self.cache_size:
                self._blocks.popitem(last=False)
        return Z

    def design(self, state: KnotState) -> np.ndarray:
        return row_kron([self._block(i, ix) for i, ix in enumerate(state.indices)])

    def fit(self, state: KnotState) -> ModelFit:
        res = self._fits.get(state)
        if res is None:
            res = fit(self.design(state), self.data.y)
            self._fits[state] = res
            if len(self._fits) > self.cache_size:
                self._fits.popitem(last=False)
        return res

    def log_posterior(self, state: KnotState, mode: str | None = None) -> float:
        evaluator = log_posterior_exact if (mode or self.mode) == "exact" else log_posterior_ebic
        return evaluator(self.fit(state), state.k, self.grid.sizes, self.gamma)


def acceptance_log_ratio(current: ModelFit, proposal: ModelFit, mode: str = "exact") -> float:
    """log of the acceptance probability for moving from ``current`` to ``proposal``."""
    if proposal.rank_deficient:
        return -math.inf
    if current.rank_deficient:
        return 0.0
    m = current.m
    if mode == "exact":
        pen, lc, lp = math.log(m + 1), current.log_a, proposal.log_a
    elif mode == "ebic":
        pen, lc, lp = math.log(m), current.log_sigma2, proposal.log_sigma2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    fit_term = 0.0 if lc == lp else 0.5 * m * (lc - lp)
    return min(0.0, 0.5 * (current.nu - proposal.nu) * pen + fit_term)


@dataclass
class StepResult:
    state: KnotState
    fit: ModelFit
    accepted: bool
    kind: str
    possible: bool


def step(state: KnotState, model: KnotModel, config: ChainConfig, rng: np.random.Generator,
         current_fit: ModelFit | None = None) -> StepResult:
    """One Metropolis-Hastings transition (stay put on rejection)."""
    if current_fit is None:
        current_fit = model.fit(state)
    prop = propose(state, model.grid, config.gamma, config.c, rng,
                   fixed_k=config.fixed_k is not None, k_max=config.k_max)
    if not prop.possible:
        return StepResult(state, current_fit, False, prop.kind, False)
    new_fit = model.fit(prop.state)
    log_alpha = acceptance_log_ratio(current_fit, new_fit, config.mode)
    u = rng.random()
    if u < math.exp(log_alpha):
        return StepResult(prop.state, new_fit, True, prop.kind, True)
    return StepResult(state, current_fit, False, prop.kind, True)


@dataclass
class ChainTrace:
    """Recorded post-burn-in states plus a per-step accept/reject log."""

    grid: CandidateGrid
    degrees: tuple[int, ...]
    config: ChainConfig
    states: list[KnotState] = field(default_factory=list)
    log_post: list[float] = field(default_factory=list)
    draws: list = field(default_factory=list)
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    kinds: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int8))
    impossible: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def k(self) -> np.ndarray:
        """Per-dimension knot counts, one row per recorded sample."""
        return np.array([s.k for s in self.states], dtype=int).reshape(len(self.states), -1)

    @property
    def k_total(self) -> np.ndarray:
        return self.k.sum(axis=1)

    def locations(self, i: int) -> tuple[np.ndarray, ...]:
        return self.states[i].locations(self.grid)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean()) if self.accepted.size else math.nan

    def move_counts(self) -> dict[str, dict[str, int]]:
        out = {}
        for kind, code in _KIND_CODE.items():
            sel = self.kinds == code
            out[kind] = {
                "proposed": int(sel.sum()),
                "accepted": int((sel & self.accepted).sum()),
                "impossible": int((sel & self.impossible).sum()),
                "rejected": int((sel & ~self.accepted & ~self.impossible).sum()),
            }
        return out


def _start(model: KnotModel, config: ChainConfig, rng: np.random.Generator) -> KnotState:
    for _ in range(100):
        s = initial_state(model.grid, rng, config.fixed_k)
        if not model.fit(s).rank_deficient:
            return s
    if config.fixed_k is None:
        # tiny data sets may only support the knot-free spline
        s = KnotState(tuple(() for _ in model.grid.sizes))
        if not model.fit(s).rank_deficient:
            return s
    raise InitializationError(
        "no full-rank starting state found; the data are too few for the basis dimension"
    )


def run(data: Dataset, config: ChainConfig, grid: CandidateGrid | None = None,
        model: KnotModel | None = None) -> ChainTrace:
    """Burn in, then record ``steps`` samples (every ``thin``-th transition)."""
    data.check_unit_cube()
    config.validate(data.d)
    if grid is None:
        grid = make_uniform_grid(config.candidates)
    if model is None:
        model = KnotModel(data, grid, config.degrees, config.gamma, config.mode)
    chain_ss, draw_ss = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(chain_ss)
    draw_rng = np.random.default_rng(draw_ss)

    state = _start(model, config, rng)
    cur_fit = model.fit(state)
    total = config.burnin + config.steps * config.thin
    accepted = np.zeros(total, bool)
    impossible = np.zeros(total, bool)
    kinds = np.zeros(total, np.int8)
    trace = ChainTrace(grid, model.degrees, config)

    for t in range(total):
        if config.literal_rejection:
            res = _step_until_accept(state, model, config, rng, cur_fit)
        else:
            res = step(state, model, config, rng, cur_fit)
        state, cur_fit = res.state, res.fit
        accepted[t], impossible[t], kinds[t] = res.accepted, not res.possible, _KIND_CODE[res.kind]
        if t >= config.burnin and (t - config.burnin + 1) % config.thin == 0:
            trace.states.append(state)
            trace.log_post.append(model.log_posterior(state))
            if config.draw_coefficients:
                trace.draws.append(draw_beta_sigma(cur_fit, draw_rng))

    trace.accepted, trace.impossible, trace.kinds = accepted, impossible, kinds
    log.debug("chain done: acceptance %.3f, mean k %.2f", trace.acceptance_rate,
              trace.k_total.mean())
    return trace


def _step_until_accept(state, model, config, rng, cur_fit, max_tries: int = 10_000) -> StepResult:
    res = None
    for _ in range(max_tries):
        res = step(state, model, config, rng, cur_fit)
        if res.accepted:
            return res
    return res
