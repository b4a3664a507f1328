"""Figure rendering for the CLI report path.

Each helper takes prepared data and a destination file; figures are
rendered headlessly and closed immediately.  These are presentation-only
views of values that also appear in the delimited outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def save_scatter(scatter: np.ndarray, path) -> None:
    """Delta-MSE against delta-loglik per replicate, with zero guide lines."""
    scatter = np.asarray(scatter, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(scatter[:, 1], scatter[:, 0], s=6, alpha=0.4, color="tab:blue")
    ax.axhline(0.0, linestyle="--", color="gray", linewidth=1)
    ax.axvline(0.0, linestyle="--", color="gray", linewidth=1)
    ax.set_xlabel("prediction MSE gap (smaller model minus true)")
    ax.set_ylabel("log-likelihood difference (true minus smaller)")
    _save(fig, path)


def save_metrics(table, path) -> None:
    """Percent-best bars with the scaled MSE printed above each bar."""
    fig, ax = plt.subplots(figsize=(5, 4))
    xs = np.arange(len(table.methods))
    heights = [table.percent_best[m] for m in table.methods]
    ax.bar(xs, heights, color="tab:blue")
    for x, m in zip(xs, table.methods):
        ax.text(x, table.percent_best[m] + 1,
                f"mse x{table.scaled_mse[m]:.2f}", ha="center", fontsize=8)
    ax.set_xticks(xs, table.methods)
    ax.set_ylabel("percent of datasets with the lowest error")
    _save(fig, path)


def save_benchmark(report, path) -> None:
    """Percent worse than the best method, one bar per method."""
    fig, ax = plt.subplots(figsize=(5, 4))
    xs = np.arange(len(report.methods))
    ax.bar(xs, [report.percent_worse[m] for m in report.methods],
           color="tab:orange")
    ax.set_xticks(xs, report.methods)
    ax.set_ylabel("holdout SSE, percent worse than best")
    _save(fig, path)


def save_inclusion(prob_theta: np.ndarray, prob_lambda: np.ndarray, path) -> None:
    """Posterior inclusion probabilities for factors and residual channels."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2),
                                   gridspec_kw={"width_ratios": [1, 2.5]})
    ax1.bar(np.arange(1, len(prob_theta) + 1), prob_theta, color="tab:blue")
    ax1.set_xlabel("factor")
    ax1.set_ylabel("inclusion probability")
    ax1.set_ylim(0, 1.02)
    ax2.bar(np.arange(1, len(prob_lambda) + 1), prob_lambda, color="tab:orange")
    ax2.set_xlabel("predictor (idiosyncratic channel)")
    ax2.set_ylim(0, 1.02)
    _save(fig, path)


def save_loadings(B: np.ndarray, path) -> None:
    """Heatmap of posterior-mean loadings."""
    B = np.asarray(B, dtype=float)
    fig, ax = plt.subplots(figsize=(4, 5))
    vmax = float(np.abs(B).max()) or 1.0
    im = ax.imshow(B, aspect="auto", cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_xlabel("factor")
    ax.set_ylabel("predictor")
    _save(fig, path)


def save_cv_surface(cv_table: dict, path) -> None:
    """Log10 cross-validation error over the two penalty grids."""
    taus_f = sorted({tf for tf, _ in cv_table})
    taus_r = sorted({tr for _, tr in cv_table})
    grid = np.full((len(taus_f), len(taus_r)), np.nan)
    for (tf, tr), err in cv_table.items():
        grid[taus_f.index(tf), taus_r.index(tr)] = np.log10(err)
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
    fig.colorbar(im, ax=ax, label="log10 CV error")
    ax.set_xticks(range(len(taus_r)),
                  [f"{t:.0e}" for t in taus_r], rotation=45, fontsize=7)
    ax.set_yticks(range(len(taus_f)), [f"{t:.0e}" for t in taus_f], fontsize=7)
    ax.set_xlabel("residual-block penalty")
    ax.set_ylabel("score-block penalty")
    _save(fig, path)
