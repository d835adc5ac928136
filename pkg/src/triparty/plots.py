"""Figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricReport  # noqa: E402

plt.rcParams.update({
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_sweep(rows: Sequence[tuple[float, MetricReport]], path, ndcg_k: int = 5, fair_k: int = 10) -> Path:
    """Three panels (user accuracy, platform fairness, item utility) against alpha_max."""
    x = [a for a, _ in rows]
    reps = [r for _, r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))

    ax = axes[0]
    ax.plot(x, [r.ndcg_at[ndcg_k] for r in reps], "o-", label=f"NDCG@{ndcg_k}")
    ax.plot(x, [r.mrr for r in reps], "s--", label="MRR")
    ax.set_title("user accuracy")

    ax = axes[1]
    ax.plot(x, [r.dgu_at[fair_k] for r in reps], "o-", color="C3", label=f"DGU@{fair_k}")
    ax.plot(x, [r.mgu_at[fair_k] for r in reps], "s--", color="C1", label=f"MGU@{fair_k}")
    ax.set_title("platform fairness (lower is fairer)")

    ax = axes[2]
    ax.plot(x, [r.eiu_target_mean for r in reps], "o-", color="C2", label="target EIU")
    ax.set_ylabel("target EIU")
    twin = ax.twinx()
    twin.plot(x, [r.eiu_cumulative for r in reps], "s--", color="C4", label="cumulative EIU")
    twin.set_ylabel("cumulative EIU")
    twin.spines["right"].set_visible(True)
    ax.set_title("item utility")
    lines = ax.get_lines() + twin.get_lines()
    ax.legend(lines, [l.get_label() for l in lines], loc="best")

    for ax in axes:
        ax.set_xlabel(r"$\alpha_{\max}$")
        if ax is not axes[2]:
            ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, path)


def plot_group_exposure(exposure_share: Sequence[float], historical_share: Sequence[float], path,
                        title: str = "") -> Path:
    p = np.asarray(exposure_share)
    q = np.asarray(historical_share)
    idx = np.arange(len(p))
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.bar(idx - 0.2, q, width=0.4, label="historical share", color="0.6")
    ax.bar(idx + 0.2, p, width=0.4, label="served exposure share", color="C0")
    ax.set_xticks(idx)
    ax.set_xlabel("popularity group (0 = most popular)")
    ax.set_ylabel("share")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_ablation(reports: Mapping[str, MetricReport], path, ndcg_k: int = 5, fair_k: int = 10) -> Path:
    """Grouped bars of the headline metrics for each labelled run."""
    metrics = [
        (f"NDCG@{ndcg_k}", lambda r: r.ndcg_at[ndcg_k]),
        ("MRR", lambda r: r.mrr),
        (f"DGU@{fair_k}", lambda r: r.dgu_at[fair_k]),
        (f"MGU@{fair_k}", lambda r: r.mgu_at[fair_k]),
        ("target EIU", lambda r: r.eiu_target_mean),
    ]
    labels = list(reports)
    width = 0.8 / len(labels)
    idx = np.arange(len(metrics))
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for j, label in enumerate(labels):
        vals = [fn(reports[label]) for _, fn in metrics]
        ax.bar(idx + (j - (len(labels) - 1) / 2) * width, vals, width=width, label=label)
    ax.set_xticks(idx)
    ax.set_xticklabels([m for m, _ in metrics])
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
