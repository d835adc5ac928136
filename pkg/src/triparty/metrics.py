"""Evaluation metrics for served lists.

Fairness is measured over popularity groups: the top-K exposure share of each
group is compared with its share of training interactions. DGU is the mean
absolute gap over groups and MGU the largest one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import ExposureState, PopularityGroups, RankedList, exposure_decay

DEFAULT_KS = (1, 3, 5, 10)


@dataclass
class MetricReport:
    ndcg_at: dict[int, float]
    mrr: float
    dgu_at: dict[int, float]
    mgu_at: dict[int, float]
    eiu_target_mean: float
    eiu_cumulative: float
    joint_utility_mean: float
    n_users: int

    def rows(self) -> list[tuple[str, int | None, float]]:
        """Flatten into (metric, k, value) rows, the metrics.csv layout."""
        out: list[tuple[str, int | None, float]] = []
        for k, v in sorted(self.ndcg_at.items()):
            out.append(("ndcg", k, v))
        out.append(("mrr", None, self.mrr))
        for k, v in sorted(self.dgu_at.items()):
            out.append(("dgu", k, v))
        for k, v in sorted(self.mgu_at.items()):
            out.append(("mgu", k, v))
        out.append(("eiu_target", None, self.eiu_target_mean))
        out.append(("eiu_cumulative", None, self.eiu_cumulative))
        out.append(("joint_utility", None, self.joint_utility_mean))
        out.append(("n_users", None, float(self.n_users)))
        return out

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, int | None, float]]) -> "MetricReport":
        vals: dict = {"ndcg": {}, "dgu": {}, "mgu": {}}
        for metric, k, value in rows:
            if metric in vals:
                vals[metric][int(k)] = float(value)
            else:
                vals[metric] = float(value)
        return cls(
            ndcg_at=vals["ndcg"],
            mrr=vals["mrr"],
            dgu_at=vals["dgu"],
            mgu_at=vals["mgu"],
            eiu_target_mean=vals["eiu_target"],
            eiu_cumulative=vals["eiu_cumulative"],
            joint_utility_mean=vals["joint_utility"],
            n_users=int(vals["n_users"]),
        )


def ndcg_at_k(ranked: RankedList | Sequence[str], relevant: set[str], k: int) -> float:
    """Binary-relevance NDCG@k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant:
        raise ValueError("relevant set is empty")
    entries = list(ranked)
    dcg = sum(1.0 / math.log2(pos + 1)
              for pos, item in enumerate(entries[:k], start=1) if item in relevant)
    ideal = sum(1.0 / math.log2(pos + 1) for pos in range(1, min(k, len(relevant)) + 1))
    return dcg / ideal


def mrr(ranked: RankedList | Sequence[str], relevant: set[str]) -> float:
    if not relevant:
        raise ValueError("relevant set is empty")
    for pos, item in enumerate(ranked, start=1):
        if item in relevant:
            return 1.0 / pos
    return 0.0


def _shares(mass: np.ndarray, groups: PopularityGroups) -> np.ndarray:
    total = mass.sum()
    if total <= 0:
        return np.asarray(groups.historical_share, dtype=float).copy()
    return mass / total


def group_exposure_mass(
    source: ExposureState | Iterable[RankedList | Sequence[str]],
    groups: PopularityGroups,
    k: int | None = None,
    weighting: str = "decay",
) -> np.ndarray:
    """Un-normalized exposure per group.

    ``source`` is either a cumulative exposure state (already position weighted,
    ``k`` and ``weighting`` are ignored) or a collection of served lists whose
    top-``k`` entries contribute ``v(pos)`` each (or 1 each with
    ``weighting="uniform"``).
    """
    parts: list[list[float]] = [[] for _ in range(groups.G)]
    if isinstance(source, ExposureState):
        for item_id, e in source.exposure.items():
            g = groups.group_of.get(item_id)
            if g is not None:
                parts[g].append(e)
    else:
        if weighting not in ("decay", "uniform"):
            raise ValueError(f"unknown exposure weighting {weighting!r}")
        if k is not None and k < 1:
            raise ValueError("k must be >= 1")
        for ranked in source:
            for pos, item_id in enumerate(ranked, start=1):
                if k is not None and pos > k:
                    break
                g = groups.group_of.get(item_id)
                if g is not None:
                    parts[g].append(exposure_decay(pos) if weighting == "decay" else 1.0)
    # fsum keeps the pooled result independent of accumulation order
    return np.array([math.fsum(p) for p in parts])


def group_exposure_shares(
    source: ExposureState | Iterable[RankedList | Sequence[str]],
    groups: PopularityGroups,
    k: int | None = None,
    weighting: str = "decay",
) -> np.ndarray:
    """Per-group exposure shares; equal to the historical shares when nothing
    has been exposed yet."""
    return _shares(group_exposure_mass(source, groups, k, weighting), groups)


def _gap(p: Sequence[float], q: Sequence[float]) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"group share length mismatch: {p.shape} vs {q.shape}")
    return np.abs(p - q)


def dgu_at_k(p: Sequence[float], q: Sequence[float]) -> float:
    return float(_gap(p, q).mean())


def mgu_at_k(p: Sequence[float], q: Sequence[float]) -> float:
    return float(_gap(p, q).max())


def eiu_of_list(
    ranked: RankedList | Sequence[str],
    ctr_fn: Callable[[str], float],
    ground_truth: str | None = None,
) -> tuple[float, float]:
    """Return (target EIU, cumulative EIU) for one served list.

    ``ctr_fn`` maps an item id to the user's predicted click probability.
    The target EIU is 0 when the ground-truth item is not in the list.
    """
    entries = list(ranked)
    if not entries:
        raise ValueError("list is empty")
    target = 0.0
    cumulative = 0.0
    for pos, item_id in enumerate(entries, start=1):
        u = exposure_decay(pos) * ctr_fn(item_id)
        cumulative += u
        if item_id == ground_truth:
            target = u
    return target, cumulative


@dataclass
class UserEval:
    user_id: str
    ndcg_at: dict[int, float]
    mrr: float
    eiu_target: float
    eiu_cumulative: float


def evaluate_user(
    user_id: str,
    ranked: RankedList | Sequence[str],
    ground_truth: str,
    ctr_fn: Callable[[str], float],
    ks: Sequence[int] = DEFAULT_KS,
) -> UserEval:
    relevant = {ground_truth}
    target, cumulative = eiu_of_list(ranked, ctr_fn, ground_truth)
    return UserEval(
        user_id=user_id,
        ndcg_at={k: ndcg_at_k(ranked, relevant, k) for k in ks},
        mrr=mrr(ranked, relevant),
        eiu_target=target,
        eiu_cumulative=cumulative,
    )


def aggregate(
    evals: Sequence[UserEval],
    served: Iterable[RankedList | Sequence[str]],
    groups: PopularityGroups,
    fairness_ks: Sequence[int] = (5, 10),
    joint_utility_total: float = 0.0,
    weighting: str = "decay",
) -> MetricReport:
    """Average per-user metrics and compute DGU/MGU once from pooled exposure.

    ``joint_utility_total`` is the realized sum of U_joint over all rounds and
    positions; it is divided by the number of rounds.
    """
    if not evals:
        raise ValueError("cannot aggregate metrics over zero users")
    served = [list(s) for s in served]
    n = len(evals)
    ks = sorted({k for e in evals for k in e.ndcg_at})
    q = groups.historical_share
    dgu, mgu = {}, {}
    for k in fairness_ks:
        p = group_exposure_shares(served, groups, k, weighting)
        dgu[k] = dgu_at_k(p, q)
        mgu[k] = mgu_at_k(p, q)
    return MetricReport(
        ndcg_at={k: math.fsum(e.ndcg_at[k] for e in evals) / n for k in ks},
        mrr=math.fsum(e.mrr for e in evals) / n,
        dgu_at=dgu,
        mgu_at=mgu,
        eiu_target_mean=math.fsum(e.eiu_target for e in evals) / n,
        eiu_cumulative=math.fsum(e.eiu_cumulative for e in evals) / n,
        joint_utility_mean=joint_utility_total / n,
        n_users=n,
    )
