"""Figure rendering for run reports.

Each report CSV gets a matching PNG rendered into the same run directory.
Figures are presentational only: the CSVs are the artifacts of record and
the only files covered by replay hashing.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_eval_figure",
    "render_sweep_figure",
    "render_histogram_figure",
    "render_evolution_figure",
]


def render_eval_figure(rows: list[dict], path) -> None:
    """Bar chart of mean OOD test MSE per activation, with sd error bars."""
    ok = [r for r in rows if r.get("status", "ok") == "ok"]
    if not ok:
        return
    names = [r["activation"] for r in ok]
    means = [r["test_mse_mean"] for r in ok]
    sds = [r["test_mse_sd"] for r in ok]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(ok), 3.2))
    ax.bar(range(len(ok)), means, yerr=sds, capsize=3, color="#4878cf")
    ax.set_xticks(range(len(ok)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("OOD test MSE")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figure(alphas, mses, reference_alpha, reference_mse, path) -> None:
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.scatter(alphas, mses, s=18, color="#4878cf", label="sampled")
    ax.scatter(
        [reference_alpha], [reference_mse],
        s=60, marker="*", color="#d65f5f", zorder=3, label="reference",
    )
    ax.set_xlabel("alpha")
    ax.set_ylabel("mean OOD test MSE")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_histogram_figure(bin_left, bin_right, counts, path) -> None:
    edges = np.append(np.asarray(bin_left), bin_right[-1])
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.stairs(counts, edges, fill=True, color="#4878cf")
    ax.set_xlabel("pre-activation value")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_evolution_figure(generations, best_fitness, path) -> None:
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.step(generations, best_fitness, where="post", color="#4878cf")
    ax.set_xlabel("generation")
    ax.set_ylabel("best fitness (-OOD MSE)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
