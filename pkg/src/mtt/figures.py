"""Figure rendering for the experiment reports.

Figures are written straight to files next to the CSV output; nothing is
shown interactively.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def trial_curves(reports, aggregate, path):
    """Per-trial error traces with the median and interquartile band."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for r in reports:
        ax.plot(np.arange(r.trace.errors.size), r.trace.errors,
                color="steelblue", alpha=0.12, linewidth=0.7)
    it = aggregate.quantile_iters
    q25, q50, q75 = aggregate.quantile_bands
    ax.fill_between(it, q25, q75, color="steelblue", alpha=0.35,
                    label="interquartile band")
    ax.plot(it, q50, color="navy", linewidth=1.5, label="median")
    ax.axhline(aggregate.median_gbt1, color="firebrick", linestyle="--",
               linewidth=1.0, label="median single-term error")
    ax.set_xlabel("iteration")
    ax.set_ylabel("squared error")
    ax.set_title(f"error vs iteration over {aggregate.n_trials} trials")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def qsweep_plot(rows, path):
    """Mean initial error versus injection dimension, with std bars."""
    fig, ax = plt.subplots(figsize=(6, 4))
    q = [r.q for r in rows]
    mean = [r.mean_eps0 for r in rows]
    std = [r.std_eps0 for r in rows]
    ax.errorbar(q, mean, yerr=std, marker="o", capsize=3, color="navy")
    ax.set_xlabel("injection dimension q")
    ax.set_ylabel("mean initial error")
    ax.set_title(f"initial error vs q ({rows[0].n_trials} trials per point)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def image_mse_plot(report, path):
    """Aggregate reconstruction MSE per method."""
    fig, ax = plt.subplots(figsize=(5, 4))
    methods = ["gbt1", "gbt2", "mtt"]
    values = [report.mean_mse[m] for m in methods]
    ax.bar(methods, values, color=["firebrick", "darkorange", "navy"])
    ax.set_ylabel("mean per-pixel squared error")
    ax.set_title(f"reconstruction MSE over {report.spec.count} images")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
