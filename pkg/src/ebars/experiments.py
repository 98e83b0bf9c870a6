"""Synthetic scenarios and replication harnesses.

Every replication draws its seeds from the master seed by
``SeedSequence(master).spawn(reps)[r]``; inside a replication the child
sequence is split again into (data, chain, ...) streams, and each stream
is reduced to an integer seed with ``generate_state(1)[0]``.

The test functions below are stand-ins.  Knot locations, jump locations
and noise levels follow the published setup; segment heights and the
smooth components are our own documented constants.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .dataset import Dataset
from .inference import estimate_knots_fixed_k, knot_location_intensity, predict, window_counts
from .sampler import ChainConfig, run
from .tsme import SPIRAL, SWISS_ROLL, gmsd, isomap, reconstruct, spiral_oracle, swiss_roll_oracle

# -- piecewise-linear truths --------------------------------------------------

# segments are (x0, y0, x1, y1); the duplicate knot 0.2 in "k4" is a jump
LINEAR_SPLINES = {
    "k1": dict(knots=(0.5,), noise_sd=0.4, segments=((0.0, 0.0, 0.5, 2.0), (0.5, 2.0, 1.0, 0.0))),
    "k2": dict(
        knots=(0.3, 0.7),
        noise_sd=0.3,
        segments=((0.0, 0.0, 0.3, 1.2), (0.3, 1.2, 0.7, -0.2), (0.7, -0.2, 1.0, 0.8)),
    ),
    "k4": dict(
        knots=(0.2, 0.2, 0.5, 0.7),
        noise_sd=0.4,
        segments=(
            (0.0, 0.0, 0.2, 0.8),
            (0.2, 2.2, 0.5, 0.5),
            (0.5, 0.5, 0.7, 1.7),
            (0.7, 1.7, 1.0, 0.8),
        ),
    ),
}


def linear_spline_truth(case: str, x) -> np.ndarray:
    """Noiseless piecewise-linear function; right-continuous at the jump."""
    if case not in LINEAR_SPLINES:
        raise ValueError(f"unknown case {case!r}; choose from {sorted(LINEAR_SPLINES)}")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    segs = LINEAR_SPLINES[case]["segments"]
    for i, (x0, y0, x1, y1) in enumerate(segs):
        last = i == len(segs) - 1
        sel = (x >= x0) & ((x <= x1) if last else (x < x1))
        out[sel] = y0 + (y1 - y0) * (x[sel] - x0) / (x1 - x0)
    return out


@dataclass(frozen=True, eq=False)
class SyntheticData:
    data: Dataset
    truth: np.ndarray  # noiseless responses at data.X
    noise_sd: float
    knots: tuple = ()


def gen_linear_spline(case: str, m: int, seed, noise_sd: float | None = None) -> SyntheticData:
    if case not in LINEAR_SPLINES:
        raise ValueError(f"unknown case {case!r}; choose from {sorted(LINEAR_SPLINES)}")
    if m < 20:
        raise ValueError("need m >= 20")
    spec = LINEAR_SPLINES[case]
    sd = spec["noise_sd"] if noise_sd is None else noise_sd
    rng = np.random.default_rng(seed)
    x = rng.random(m)
    f = linear_spline_truth(case, x)
    y = f + sd * rng.standard_normal(m)
    return SyntheticData(Dataset(x, y), f, sd, spec["knots"])


# -- curve and surface stand-ins ----------------------------------------------


def _step(x, at):
    return (x >= at).astype(float)


CURVES: dict[str, dict] = {
    "1.1": dict(noise_sd=2.0, jumps=(), f=lambda x: 6 * np.sin(2 * np.pi * x) + 4 * x),
    "1.2": dict(
        noise_sd=2.0,
        jumps=(),
        f=lambda x: 8 * np.exp(-(((x - 0.3) / 0.1) ** 2)) + 5 * np.exp(-(((x - 0.7) / 0.15) ** 2)),
    ),
    "1.3": dict(noise_sd=4.0, jumps=(0.4,), f=lambda x: 6 * np.sin(2 * np.pi * x) + 24 * _step(x, 0.4)),
    "1.4": dict(
        noise_sd=1.0,
        jumps=(0.25, 0.5, 0.75),
        f=lambda x: 2 * np.sin(4 * np.pi * x) + 6 * (_step(x, 0.25) - _step(x, 0.5) + _step(x, 0.75)),
    ),
}

SURFACES: dict[str, dict] = {
    "2.1": dict(noise_sd=1.0, jumps=(), f=lambda x1, x2: 4 * np.sin(np.pi * x1) * np.sin(np.pi * x2)),
    "2.2": dict(
        noise_sd=1.5,
        jumps=(),
        f=lambda x1, x2: 6 * np.exp(-8 * ((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2)) + 3 * x1 * x2,
    ),
    "2.3": dict(noise_sd=2.0, jumps=((0, 0.5),), f=lambda x1, x2: 2 * np.sin(2 * np.pi * x2) + 12 * _step(x1, 0.5)),
    "2.4": dict(
        noise_sd=2.0,
        jumps=((0, 0.4), (1, 0.6)),
        f=lambda x1, x2: 10 * _step(x1, 0.4) + 10 * _step(x2, 0.6) + 2 * x1 * x2,
    ),
}


def curve_truth(case: str, x) -> np.ndarray:
    if case not in CURVES:
        raise ValueError(f"unknown curve case {case!r}; choose from {sorted(CURVES)}")
    return CURVES[case]["f"](np.asarray(x, dtype=float))


def surface_truth(case: str, X) -> np.ndarray:
    if case not in SURFACES:
        raise ValueError(f"unknown surface case {case!r}; choose from {sorted(SURFACES)}")
    X = np.asarray(X, dtype=float)
    return SURFACES[case]["f"](X[:, 0], X[:, 1])


def gen_curve(case: str, m: int, seed) -> SyntheticData:
    if case not in CURVES:
        raise ValueError(f"unknown curve case {case!r}; choose from {sorted(CURVES)}")
    rng = np.random.default_rng(seed)
    x = rng.random(m)
    f = curve_truth(case, x)
    sd = CURVES[case]["noise_sd"]
    return SyntheticData(Dataset(x, f + sd * rng.standard_normal(m)), f, sd)


def gen_surface(case: str, m: int, seed) -> SyntheticData:
    if case not in SURFACES:
        raise ValueError(f"unknown surface case {case!r}; choose from {sorted(SURFACES)}")
    rng = np.random.default_rng(seed)
    X = rng.random((m, 2))
    f = surface_truth(case, X)
    sd = SURFACES[case]["noise_sd"]
    return SyntheticData(Dataset(X, f + sd * rng.standard_normal(m)), f, sd)


# -- manifolds ------------------------------------------------------------------


def gen_spiral(m: int, noise_sd: float, seed):
    """Points on r(t) = a + b t with t ~ U[0, t_max], plus isotropic noise."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, SPIRAL["t_max"], m)
    a, b = SPIRAL["a"], SPIRAL["b"]
    W = np.column_stack([(a + b * t) * np.cos(t), (a + b * t) * np.sin(t)])
    return W + noise_sd * rng.standard_normal(W.shape), t[:, None]


def gen_swiss_roll(m: int, noise_sd: float, seed):
    """Points on (t cos t, h, t sin t) with t ~ U[t_min, t_max], h ~ U[0, h_max]."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(SWISS_ROLL["t_min"], SWISS_ROLL["t_max"], m)
    h = rng.uniform(0.0, SWISS_ROLL["h_max"], m)
    W = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    return W + noise_sd * rng.standard_normal(W.shape), np.column_stack([t, h])


MANIFOLDS = {
    "spiral": dict(gen=gen_spiral, oracle=spiral_oracle, params=SPIRAL, d=1, noise_sd=0.2, m=1000, neighbors=15,
                   chain=dict(degrees=(3,), candidates=(100,))),
    "swiss_roll": dict(gen=gen_swiss_roll, oracle=swiss_roll_oracle, params=SWISS_ROLL, d=2, noise_sd=1.5, m=3000,
                       neighbors=6,
                       chain=dict(degrees=(3, 3), candidates=(20, 20))),
}


# -- metrics ----------------------------------------------------------------------


def censored_mse(pred, truth, trim: float = 0.025) -> float:
    """MSE after dropping points whose signed error is in the top or bottom ``trim`` fraction."""
    err = np.asarray(pred, float) - np.asarray(truth, float)
    lo, hi = np.quantile(err, [trim, 1.0 - trim])
    keep = (err >= lo) & (err <= hi)
    return float(np.mean(err[keep] ** 2))


# -- specs and reports ------------------------------------------------------------


@dataclass
class ScenarioSpec:
    scenario: str
    case: str
    m: int
    reps: int = 20
    seed: int = 1
    noise_sd: float | None = None
    chain: ChainConfig = field(default_factory=ChainConfig)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("need at least one replication")
        if self.noise_sd is not None and self.noise_sd <= 0:
            raise ValueError("noise sd must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ReplicationReport:
    spec: ScenarioSpec
    rows: list[dict]
    notes: list[str] = field(default_factory=list)
    seconds: float = 0.0
    extras: list = field(default_factory=list)  # per-replication objects kept for plotting

    @property
    def metrics(self) -> list[str]:
        return [k for k in self.rows[0] if k != "rep"] if self.rows else []

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def mean(self, name: str) -> float:
        return float(np.mean(self.column(name)))

    def sd(self, name: str) -> float:
        col = self.column(name)
        return float(np.std(col, ddof=1)) if col.size > 1 else math.nan

    def median(self, name: str) -> float:
        return float(np.median(self.column(name)))

    def summary(self) -> dict:
        return {k: {"mean": self.mean(k), "sd": self.sd(k)} for k in self.metrics}


def replication_seeds(master: int, reps: int, streams: int) -> list[list[int]]:
    out = []
    for child in np.random.SeedSequence(master).spawn(reps):
        out.append([int(s.generate_state(1)[0]) for s in child.spawn(streams)])
    return out


def _map(fn: Callable, items: list, jobs: int):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


STAND_IN_NOTE = "test functions are documented stand-ins, not the published ones"

# -- knot inference -----------------------------------------------------------

K4_WINDOWS = ((0.175, 0.225), (0.475, 0.525), (0.675, 0.725))


def _knot_rep(args):
    spec, r, (s_data, s_fixed, s_free) = args
    sim = gen_linear_spline(spec.case, spec.m, s_data, spec.noise_sd)
    truth = np.sort(np.asarray(sim.knots))
    k_true = truth.size
    row: dict = {"rep": r}
    if spec.options.get("fixed", True):
        cfg = replace(spec.chain, fixed_k=(k_true,), seed=s_fixed)
        est = estimate_knots_fixed_k(run(sim.data, cfg), k_true)
        for j, e in enumerate(np.abs(est - truth)):
            row[f"abs_err_knot{j + 1}"] = float(e)
    if spec.options.get("free", True):
        cfg = replace(spec.chain, fixed_k=None, seed=s_free)
        tr = run(sim.data, cfg)
        row["mean_k"] = float(tr.k_total.mean())
        row["acceptance"] = tr.acceptance_rate
        if spec.case == "k4":
            bw = spec.options.get("bandwidth", 0.005)
            ki = knot_location_intensity(tr, 0, bw)
            counts = window_counts(tr, K4_WINDOWS)
            for (lo, hi), c in zip(K4_WINDOWS, counts):
                row[f"intensity_{lo:.3f}_{hi:.3f}"] = ki.integral(lo, hi)
                row[f"count_{lo:.3f}_{hi:.3f}"] = float(c)
        return row, tr
    return row, None


def run_knot_inference(spec: ScenarioSpec, jobs: int = 1, keep_traces: bool = False) -> ReplicationReport:
    """Knot-location errors (fixed-k chains) and knot-number summaries (free-k chains)."""
    t0 = time.perf_counter()
    seeds = replication_seeds(spec.seed, spec.reps, 3)
    out = _map(_knot_rep, [(spec, r, s) for r, s in enumerate(seeds)], jobs)
    rep = ReplicationReport(spec, [o[0] for o in out], [STAND_IN_NOTE])
    if keep_traces:
        rep.extras = [o[1] for o in out]
    rep.seconds = time.perf_counter() - t0
    return rep


# -- manifold denoising ---------------------------------------------------------


def _gmsd_rep(args):
    spec, r, (s_data, s_chain) = args
    man = MANIFOLDS[spec.case]
    sd = man["noise_sd"] if spec.noise_sd is None else spec.noise_sd
    X, _ = man["gen"](spec.m, sd, s_data)
    oracle = man["oracle"]()
    emb = isomap(X, spec.options.get("neighbors", man["neighbors"]), man["d"])
    cfg = replace(spec.chain, seed=s_chain)
    den, traces = reconstruct(emb, X, cfg)
    row = {"rep": r, "gmsd_input": gmsd(X, oracle), "gmsd_tsme": gmsd(den, oracle)}
    return row, (X, den, emb.coords)


def run_gmsd(spec: ScenarioSpec, jobs: int = 1, keep_points: bool = False) -> ReplicationReport:
    t0 = time.perf_counter()
    if spec.case not in MANIFOLDS:
        raise ValueError(f"unknown manifold {spec.case!r}; choose from {sorted(MANIFOLDS)}")
    seeds = replication_seeds(spec.seed, spec.reps, 2)
    out = _map(_gmsd_rep, [(spec, r, s) for r, s in enumerate(seeds)], jobs)
    rep = ReplicationReport(spec, [o[0] for o in out], ["manifold parameters are our calibration"])
    if keep_points:
        rep.extras = [o[1] for o in out]
    rep.seconds = time.perf_counter() - t0
    return rep


def manifold_chain(name: str, **overrides) -> ChainConfig:
    return ChainConfig(**{**MANIFOLDS[name]["chain"], **overrides})


# -- gamma sweep ------------------------------------------------------------------


def _gamma_rep(args):
    spec, r, (s_data, s_test, s_chain) = args
    gammas = spec.options.get("gammas", (1.0, 0.5, 0.0))
    sim = gen_curve(spec.case, spec.m, s_data)
    x_test = np.random.default_rng(s_test).random(spec.options.get("m_test", 1000))
    f_test = curve_truth(spec.case, x_test)
    row: dict = {"rep": r}
    for g in gammas:
        cfg = replace(spec.chain, gamma=g, seed=s_chain, fixed_k=None)
        tr = run(sim.data, cfg)
        pred = predict(tr, sim.data, x_test).mean
        row[f"mse_gamma{g:g}"] = censored_mse(pred, f_test)
        row[f"mse_raw_gamma{g:g}"] = float(np.mean((pred - f_test) ** 2))
        row[f"mean_k_gamma{g:g}"] = float(tr.k_total.mean())
    return row


def run_gamma_sweep(spec: ScenarioSpec, jobs: int = 1) -> ReplicationReport:
    """Censored test MSE and knot counts for several gamma on one curve case."""
    t0 = time.perf_counter()
    seeds = replication_seeds(spec.seed, spec.reps, 3)
    rows = _map(_gamma_rep, [(spec, r, s) for r, s in enumerate(seeds)], jobs)
    rep = ReplicationReport(spec, rows, [STAND_IN_NOTE])
    rep.seconds = time.perf_counter() - t0
    return rep
