"""Figure rendering for the report paths.

Every plotting function reads the same arrays that go into the delimited
outputs and writes a PNG next to them; figures can therefore always be
regenerated from the persisted files alone.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_FIGSIZE = (6.0, 4.0)


def _finish(fig, path: str):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def survival_plot(path: str, survival: np.ndarray, fit=None, title: str = ""):
    """Log-log survival of the meeting time with the fitted polynomial bound."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    pos = (survival[:, 0] >= 1) & (survival[:, 1] > 0)
    ax.loglog(survival[pos, 0], survival[pos, 1], drawstyle="steps-post", label="empirical")
    if fit is not None:
        ns = survival[pos, 0]
        ns = ns[ns >= fit.n_min]
        if ns.size:
            label = f"{fit.fit_C:.3g} n^(-{fit.fit_kappa:.3g})"
            if fit.superpolynomial:
                label += " [super-polynomial decay]"
            ax.loglog(ns, fit.bound(ns), "--", label=label)
    ax.set_xlabel("n")
    ax.set_ylabel("P(tau > n)")
    if title:
        ax.set_title(title)
    ax.legend()
    _finish(fig, path)


def meetings_histogram(path: str, taus, title: str = ""):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    taus = np.asarray(taus)
    ax.hist(taus, bins=min(60, max(10, int(np.sqrt(taus.size)))), color="C0")
    ax.set_xlabel("meeting time tau")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    _finish(fig, path)


def estimates_histogram(path: str, values: np.ndarray, title: str = ""):
    """Per-component histograms of the replicate estimator values."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    d = values.shape[1]
    fig, axes = plt.subplots(1, d, figsize=(4.0 * d, 3.5), squeeze=False)
    for i in range(d):
        ax = axes[0, i]
        ax.hist(values[:, i], bins=50, color="C0", density=True)
        ax.axvline(values[:, i].mean(), color="C3", linestyle="--")
        ax.set_xlabel(f"h{i + 1}")
    if title:
        fig.suptitle(title)
    _finish(fig, path)


def inefficiency_bars(path: str, serial: float, unbiased: float, cost_unit: str):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.bar(["serial", "unbiased"], [serial, unbiased], color=["C0", "C1"])
    ax.set_ylabel(f"inefficiency ({cost_unit})")
    _finish(fig, path)


def magnetization_plot(path: str, observed_counts, expected_probs, values, title: str = ""):
    """Observed vs exact frequencies of a discrete statistic of perfect draws."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    observed = np.asarray(observed_counts, dtype=float)
    total = observed.sum()
    ax.bar(values, observed / total, width=0.8 * (values[1] - values[0] if len(values) > 1 else 1),
           label="perfect-sampler draws")
    ax.plot(values, expected_probs, "o-", color="C3", label="exact")
    ax.set_xlabel("statistic")
    ax.set_ylabel("probability")
    if title:
        ax.set_title(title)
    ax.legend()
    _finish(fig, path)
