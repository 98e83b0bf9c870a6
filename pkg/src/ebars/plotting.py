"""Static figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 150


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_knot_summary(summary, path, truth=None, data=None, fitted=None) -> Path:
    """Knot-number histogram and knot intensity (plus the fit, when given)."""
    ncol = 3 if data is not None else 2
    fig, axes = plt.subplots(1, ncol, figsize=(4.0 * ncol, 3.2))
    ax = axes[0]
    ax.bar(summary.counts, summary.probs, width=0.8, color="0.6")
    ax.set_xlabel("number of knots")
    ax.set_ylabel("posterior probability")
    ax = axes[1]
    for dim, curve in enumerate(summary.intensity):
        ax.plot(summary.grid, curve, label=f"x{dim + 1}")
    for t in truth or ():
        ax.axvline(t, color="k", ls=":", lw=0.8)
    ax.set_xlabel("knot location")
    ax.set_ylabel("knot intensity")
    if len(summary.intensity) > 1:
        ax.legend(frameon=False)
    if data is not None:
        ax = axes[2]
        x = data.X[:, 0]
        ax.plot(x, data.y, ".", ms=2, color="0.6")
        if fitted is not None:
            order = np.argsort(fitted[0][:, 0])
            ax.plot(fitted[0][order, 0], fitted[1][order], "C3-")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    return _save(fig, path)


def plot_points(noisy, denoised, path, embedding=None) -> Path:
    """Noisy versus denoised cloud (first two or three ambient coordinates)."""
    noisy, denoised = np.asarray(noisy), np.asarray(denoised)
    three = noisy.shape[1] >= 3
    fig = plt.figure(figsize=(8, 4))
    for i, (pts, title) in enumerate(((noisy, "input"), (denoised, "denoised"))):
        c = embedding[:, 0] if embedding is not None else None
        if three:
            ax = fig.add_subplot(1, 2, i + 1, projection="3d")
            ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], s=2, c=c)
        else:
            ax = fig.add_subplot(1, 2, i + 1)
            ax.scatter(pts[:, 0], pts[:, 1] if pts.shape[1] > 1 else np.zeros(len(pts)), s=2, c=c)
            ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(title)
    return _save(fig, path)


def plot_report(report, path) -> Path:
    """Box plot of every numeric per-replication metric."""
    names = report.metrics
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(names) + 1), 3.2))
    ax.boxplot([report.column(n) for n in names])
    ax.set_xticks(range(1, len(names) + 1), names, rotation=45, ha="right", fontsize=7)
    ax.set_title(f"{report.spec.scenario} {report.spec.case} (m={report.spec.m}, reps={len(report.rows)})",
                 fontsize=9)
    return _save(fig, path)


def plot_gamma_sweep(report, path) -> Path:
    gammas = sorted({float(k[len("mse_gamma"):]) for k in report.metrics if k.startswith("mse_gamma")},
                    reverse=True)
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    mse = [report.column(f"mse_gamma{g:g}") for g in gammas]
    ks = [report.mean(f"mean_k_gamma{g:g}") for g in gammas]
    axes[0].boxplot(mse)
    axes[0].set_xticks(range(1, len(gammas) + 1), [f"{g:g}" for g in gammas])
    axes[0].set_xlabel("gamma")
    axes[0].set_ylabel("censored test MSE")
    axes[1].plot(gammas, ks, "o-")
    axes[1].invert_xaxis()
    axes[1].set_xlabel("gamma")
    axes[1].set_ylabel("mean number of knots")
    return _save(fig, path)
