"""Command-line interface: ``ebars fit | experiment | denoise``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
The output directory defaults to ``$EBARS_OUTPUT_DIR`` or ``./ebars_out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dataset import Dataset
from .experiments import (
    MANIFOLDS,
    ScenarioSpec,
    gen_curve,
    gen_linear_spline,
    replication_seeds,
    run_gamma_sweep,
    run_gmsd,
    run_knot_inference,
)
from .inference import predict, summarize
from .sampler import ChainConfig, InitializationError, run
from .tsme import BUILTIN_ORACLES, DisconnectedGraphError, gmsd, isomap, reconstruct

log = logging.getLogger("ebars")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUTPUT_ENV = "EBARS_OUTPUT_DIR"


class DataError(ValueError):
    pass


class UsageError(ValueError):
    pass


# -- scenarios ----------------------------------------------------------------

# name -> (runner kind, case, default m, chain defaults)
EXPERIMENTS = {
    "knots-k1": ("knots", "k1", 500, dict(degrees=(1,), candidates=(100,))),
    "knots-k2": ("knots", "k2", 500, dict(degrees=(1,), candidates=(100,))),
    "knots-k4": ("knots", "k4", 500, dict(degrees=(1,), candidates=(100,))),
    "gamma-sweep": ("gamma", "1.3", 500, dict(degrees=(3,), candidates=(100,))),
    "gmsd-spiral": ("gmsd", "spiral", 1000, None),
    "gmsd-swiss": ("gmsd", "swiss_roll", 3000, None),
}


# -- small helpers --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _broadcast(vals, d: int, what: str) -> tuple[int, ...]:
    if vals is None:
        return None
    if len(vals) == 1:
        return tuple(vals) * d
    if len(vals) != d:
        raise UsageError(f"--{what} needs 1 or {d} values, got {len(vals)}")
    return tuple(vals)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    """Header row plus a float matrix; any non-numeric cell is a DataError."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if all(_is_number(h) for h in header):
        raise DataError(f"{path}: the first row must be a header of column names")
    out = np.empty((len(rows) - 1, len(header)))
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
        try:
            out[i - 2] = [float(c) for c in r]
        except ValueError:
            raise DataError(f"{path}:{i}: non-numeric value in {r}")
    if not np.all(np.isfinite(out)):
        raise DataError(f"{path}: non-finite values")
    return header, out


def write_csv(path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return Path(path)


def write_json(path, obj) -> Path:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return Path(path)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _manifest(command: str, argv, config: dict, seeds, inputs: dict, timings: dict, outputs) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "version": __version__,
        "software": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "inputs": inputs,
        "timings": timings,
        "outputs": sorted(str(p) for p in outputs),
    }


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "ebars_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _chain_from_args(args, d: int, base: dict | None = None) -> ChainConfig:
    base = dict(base or {})
    default_cand = (100,) if d == 1 else (20,) * d
    cand = _broadcast(args.candidates, d, "candidates") or base.get("candidates") or default_cand
    deg = _broadcast(args.degree, d, "degree") or base.get("degrees") or (3,) * d
    mode = args.mode or base.get("mode") or ("exact" if d == 1 else "ebic")
    cfg = ChainConfig(
        gamma=args.gamma if args.gamma is not None else base.get("gamma", 1.0),
        c=args.c,
        burnin=args.burnin if args.burnin is not None else base.get("burnin", 5000),
        steps=args.steps if args.steps is not None else base.get("steps", 5000),
        thin=args.thin,
        mode=mode,
        seed=args.seed,
        fixed_k=_broadcast(getattr(args, "fixed_k", None), d, "fixed-k"),
        candidates=cand,
        degrees=deg,
    )
    try:
        cfg.validate(d)
    except ValueError as e:
        raise UsageError(str(e))
    return cfg


def _grid_points(d: int, total: int = 201) -> np.ndarray:
    per = max(2, int(round(total ** (1.0 / d))))
    axes = [np.linspace(0.0, 1.0, per)] * d
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


# -- fit ------------------------------------------------------------------------


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    src = Path(args.input)
    header, arr = read_numeric_csv(src)
    if arr.shape[1] < 2:
        raise DataError("need at least one x column and a y column")
    X, y = arr[:, :-1], arr[:, -1]
    d = X.shape[1]
    lower, upper = X.min(axis=0), X.max(axis=0)
    if args.rescale:
        span = np.where(upper > lower, upper - lower, 1.0)
        X = (X - lower) / span
    elif X.min() < 0.0 or X.max() > 1.0:
        raise DataError("x values outside [0, 1]; pass --rescale to min-max rescale them")
    data = Dataset(X, y)
    cfg = _chain_from_args(args, d)
    inputs = {"data": {"path": str(src), "sha256": _sha256(src), "rows": data.m, "columns": header}}

    if args.test:
        tpath = Path(args.test)
        _, tarr = read_numeric_csv(tpath)
        if tarr.shape[1] not in (d, d + 1):
            raise DataError(f"test CSV needs {d} x columns (optionally followed by y)")
        X_new = tarr[:, :d]
        if args.rescale:
            X_new = (X_new - lower) / np.where(upper > lower, upper - lower, 1.0)
        inputs["test"] = {"path": str(tpath), "sha256": _sha256(tpath), "rows": len(tarr)}
    else:
        X_new = _grid_points(d)

    t1 = time.perf_counter()
    trace = run(data, cfg)
    t2 = time.perf_counter()
    pred = predict(trace, data, X_new)
    summary = summarize(trace)
    t3 = time.perf_counter()

    out = _outdir(args)
    written = []
    xcols = [f"x{i + 1}" for i in range(d)]
    rows = []
    for i, (s, lp) in enumerate(zip(trace.states, trace.log_post)):
        locs = s.locations(trace.grid)
        rows.append([i, lp, s.total, *s.k, *(" ".join(_fmt(v) for v in loc) for loc in locs)])
    written.append(write_csv(out / "samples.csv",
                             ["step", "log_posterior", "k_total", *[f"k_{c}" for c in xcols],
                              *[f"knots_{c}" for c in xcols]], rows))
    written.append(write_csv(out / "predictions.csv", [*xcols, "mean", "sd"],
                             [[*x, mu, sd] for x, mu, sd in zip(X_new, pred.mean, pred.sd)]))
    written.append(write_csv(out / "intensity.csv", ["location", *[f"intensity_{c}" for c in xcols]],
                             [[g, *(ik[j] for ik in summary.intensity)] for j, g in enumerate(summary.grid)]))
    knot_json = {
        "k_support": summary.counts,
        "k_probability": summary.probs,
        "mean_k": summary.mean_k,
        "mean_k_per_dim": summary.per_dim_mean,
        "bandwidth": summary.bandwidth,
        "acceptance_rate": trace.acceptance_rate,
        "moves": trace.move_counts(),
        "skipped_rank_deficient": pred.n_skipped,
    }
    written.append(write_json(out / "knot_summary.json", knot_json))
    if not args.no_plots:
        from .plotting import plot_knot_summary

        on_data = predict(trace, data, data.X) if d == 1 else None
        written.append(plot_knot_summary(summary, out / "fit.png", data=data if d == 1 else None,
                                         fitted=(data.X, on_data.mean) if on_data else None))
    config = {**cfg.to_dict(), "rescale": bool(args.rescale), "x_lower": lower, "x_upper": upper}
    man = _manifest("fit", args.argv, config, {"chain": cfg.seed}, inputs,
                    {"read": t1 - t0, "sample": t2 - t1, "summarise": t3 - t2,
                     "total": time.perf_counter() - t0}, written + [out / "manifest.json"])
    write_json(out / "manifest.json", man)
    print(f"mean knots {summary.mean_k:.3f}, acceptance {trace.acceptance_rate:.3f}; wrote {out}")
    return EXIT_OK


# -- experiment --------------------------------------------------------------------


def _report_rows(report):
    names = report.metrics
    rows = [[r["rep"], *(r[n] for n in names)] for r in report.rows]
    rows.append(["mean", *(report.mean(n) for n in names)])
    rows.append(["sd", *(report.sd(n) for n in names)])
    rows.append(["median", *(report.median(n) for n in names)])
    return ["rep", *names], rows


def cmd_experiment(args, parser) -> int:
    if args.name is None:
        parser.print_usage(sys.stderr)
        print(f"error: an experiment name is required; available: {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return EXIT_USAGE
    if args.name not in EXPERIMENTS:
        print(f"error: unknown experiment {args.name!r}; available: {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return EXIT_USAGE
    kind, case, m_default, chain_base = EXPERIMENTS[args.name]
    t0 = time.perf_counter()
    m = args.m or m_default
    if kind == "gmsd":
        man = MANIFOLDS[case]
        base = {**man["chain"]}
        chain = _chain_from_args(args, man["d"], base)
        options = {"neighbors": args.neighbors or man["neighbors"]}
    else:
        chain = _chain_from_args(args, 1, chain_base)
        options = {}
        if kind == "gamma" and args.case:
            case = args.case
    spec = ScenarioSpec(args.name, case, m, reps=args.reps, seed=args.seed, chain=chain, options=options)

    if kind == "knots":
        report = run_knot_inference(spec, args.jobs, keep_traces=not args.no_plots)
        streams = 3
    elif kind == "gamma":
        report = run_gamma_sweep(spec, args.jobs)
        streams = 3
    else:
        report = run_gmsd(spec, args.jobs, keep_points=args.emit_data or not args.no_plots)
        streams = 2

    out = _outdir(args)
    stem = args.name.replace("-", "_")
    header, rows = _report_rows(report)
    written = [write_csv(out / f"{stem}.csv", header, rows)]
    seeds = replication_seeds(spec.seed, spec.reps, streams)

    if args.emit_data:
        for r, s in enumerate(seeds):
            if kind == "knots":
                sim = gen_linear_spline(case, m, s[0])
                pts, cols = np.column_stack([sim.data.X[:, 0], sim.data.y]), ["x1", "y"]
            elif kind == "gamma":
                sim = gen_curve(case, m, s[0])
                pts, cols = np.column_stack([sim.data.X[:, 0], sim.data.y]), ["x1", "y"]
            else:
                pts = report.extras[r][0]
                cols = [f"x{i + 1}" for i in range(pts.shape[1])]
            written.append(write_csv(out / f"{stem}_data_rep{r}.csv", cols, pts))

    if not args.no_plots:
        from . import plotting

        written.append(plotting.plot_report(report, out / f"{stem}.png"))
        if kind == "gamma":
            written.append(plotting.plot_gamma_sweep(report, out / f"{stem}_gamma.png"))
        elif kind == "knots" and report.extras:
            summ = summarize(report.extras[0], bandwidth=0.005 if case == "k4" else None)
            written.append(plotting.plot_knot_summary(summ, out / f"{stem}_rep0.png"))
        elif kind == "gmsd" and report.extras:
            X, den, U = report.extras[0]
            written.append(plotting.plot_points(X, den, out / f"{stem}_rep0.png", U))

    man = _manifest("experiment", args.argv, {**spec.to_dict(), "jobs": args.jobs},
                    {"master": spec.seed, "replications": seeds}, {},
                    {"total": time.perf_counter() - t0}, written + [out / f"{stem}_manifest.json"])
    man["notes"] = report.notes
    man["summary"] = report.summary()
    if kind == "gmsd":
        man["manifold"] = {k: MANIFOLDS[case][k] for k in ("params", "noise_sd", "d")}
    write_json(out / f"{stem}_manifest.json", man)
    for n in report.metrics:
        print(f"{n}: mean {report.mean(n):.6g} sd {report.sd(n):.6g}")
    print(f"wrote {out / (stem + '.csv')}")
    return EXIT_OK


# -- denoise --------------------------------------------------------------------


def cmd_denoise(args) -> int:
    t0 = time.perf_counter()
    src = Path(args.input)
    header, pts = read_numeric_csv(src)
    d = args.intrinsic_dim
    if d < 1 or d > pts.shape[1]:
        raise UsageError(f"--intrinsic-dim must lie in [1, {pts.shape[1]}]")
    base = dict(candidates=(100,), degrees=(3,)) if d == 1 else dict(candidates=(20,) * d, degrees=(3,) * d)
    cfg = _chain_from_args(args, d, base)
    try:
        emb = isomap(pts, args.neighbors, d)
    except DisconnectedGraphError as e:
        raise DataError(
            f"the {args.neighbors}-NN graph is disconnected (component sizes {e.sizes}); "
            "raise --neighbors"
        )
    t1 = time.perf_counter()
    den, traces = reconstruct(emb, pts, cfg)
    t2 = time.perf_counter()

    out = _outdir(args)
    written = [
        write_csv(out / "embedding.csv", [f"u{i + 1}" for i in range(d)], emb.coords),
        write_csv(out / "denoised.csv", header, den),
    ]
    result = {}
    if args.oracle:
        oracle = BUILTIN_ORACLES[args.oracle]()
        result = {"oracle": args.oracle, "gmsd_input": gmsd(pts, oracle), "gmsd_denoised": gmsd(den, oracle)}
        written.append(write_json(out / "gmsd.json", result))
        print(f"GMSD input {result['gmsd_input']:.6g}, denoised {result['gmsd_denoised']:.6g}")
    if not args.no_plots:
        from .plotting import plot_points

        written.append(plot_points(pts, den, out / "denoise.png", emb.coords))
    coord_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(pts.shape[1])]
    man = _manifest(
        "denoise", args.argv, {**cfg.to_dict(), "neighbors": args.neighbors, "intrinsic_dim": d,
                               "oracle": args.oracle},
        {"master": cfg.seed, "coordinates": coord_seeds},
        {"points": {"path": str(src), "sha256": _sha256(src), "rows": len(pts), "columns": header}},
        {"embed": t1 - t0, "reconstruct": t2 - t1, "total": time.perf_counter() - t0},
        written + [out / "manifest.json"],
    )
    man["gmsd"] = result
    man["mean_knots"] = [float(t.k_total.mean()) for t in traces]
    write_json(out / "manifest.json", man)
    print(f"wrote {out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _chain_flags(p, fit: bool = False):
    g = p.add_argument_group("sampler")
    g.add_argument("--gamma", type=float, default=None, help="model-space prior exponent (default 1.0)")
    g.add_argument("--c", type=float, default=0.4, help="move-probability scale in (0, 0.5)")
    g.add_argument("--burnin", type=int, default=None, help="burn-in steps (default 5000)")
    g.add_argument("--steps", type=int, default=None, help="recorded steps (default 5000)")
    g.add_argument("--thin", type=int, default=1)
    g.add_argument("--candidates", type=_int_list, default=None,
                   help="candidate knots per dimension, comma list (default 100 for d = 1, 20 per dimension otherwise)")
    g.add_argument("--degree", type=_int_list, default=None, help="spline degree per dimension (default 3)")
    g.add_argument("--mode", choices=("exact", "ebic"), default=None,
                   help="posterior (default exact for d=1, ebic otherwise)")
    g.add_argument("--seed", type=int, default=0 if fit else None)
    if fit:
        g.add_argument("--fixed-k", type=_int_list, default=None, help="relocation-only chain with k knots")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebars", description="Bayesian free-knot spline regression")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{fit,experiment,denoise}")

    f = sub.add_parser("fit", help="fit a spline to CSV data (columns x1..xd, y)")
    f.add_argument("input")
    f.add_argument("--test", help="CSV of x points to predict at (default: a grid)")
    f.add_argument("--rescale", action="store_true", help="min-max rescale x into [0, 1]")
    f.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./ebars_out)")
    f.add_argument("--no-plots", action="store_true")
    _chain_flags(f, fit=True)

    e = sub.add_parser("experiment", help="run a canned replication study")
    e.add_argument("name", nargs="?", help=", ".join(EXPERIMENTS))
    e.add_argument("--m", type=int, default=None, help="sample size")
    e.add_argument("--reps", type=int, default=20)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--case", default=None, help="curve case for gamma-sweep (default 1.3)")
    e.add_argument("--neighbors", type=int, default=None,
                   help="ISOMAP neighbors for gmsd-* (default 15 for the spiral, 6 for the Swiss roll)")
    e.add_argument("--emit-data", action="store_true", help="also write each replication's dataset")
    e.add_argument("--out")
    e.add_argument("--no-plots", action="store_true")
    _chain_flags(e)
    e.set_defaults(seed=1)

    n = sub.add_parser("denoise", help="two-stage manifold denoising of a point cloud")
    n.add_argument("input")
    n.add_argument("--intrinsic-dim", type=int, default=1)
    n.add_argument("--neighbors", type=int, default=10)
    n.add_argument("--oracle", choices=sorted(BUILTIN_ORACLES), default=None)
    n.add_argument("--out")
    n.add_argument("--no-plots", action="store_true")
    _chain_flags(n, fit=True)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args.argv = argv
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "experiment":
            return cmd_experiment(args, parser)
        return cmd_denoise(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except InitializationError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
