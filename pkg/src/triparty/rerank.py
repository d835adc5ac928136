"""Platform re-ranking: position-aware multi-objective utilities, greedy list
construction and the exposure state transition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    ExposureState,
    ItemRecord,
    PopularityGroups,
    RankedList,
    UserProfile,
    cosine_similarity,
    exposure_decay,
    sigmoid,
    stable_seed,
)
from .metrics import dgu_at_k, group_exposure_mass, mgu_at_k

__all__ = [
    "AblationFlags",
    "RerankConfig",
    "JointUtilityBreakdown",
    "exposure_decay",
    "position_weight",
    "participation_alpha",
    "ctr_estimate",
    "user_utility",
    "item_utility",
    "minmax_normalize",
    "marginal_fairness_gain",
    "platform_utility",
    "joint_utility",
    "greedy_rerank",
    "score_fixed_order",
    "apply_exposure_update",
]


@dataclass
class AblationFlags:
    disable_platform_utility: bool = False
    static_alpha: float | None = None
    disable_user_utility: bool = False
    disable_item_utility: bool = False
    disable_embedding_sim: bool = False
    randomize_embedding_sim: int | None = None  # seed, or None when off

    def __post_init__(self):
        if self.static_alpha is not None and not 0.0 <= self.static_alpha <= 1.0:
            raise ValueError("static_alpha must lie in [0, 1]")


@dataclass
class RerankConfig:
    alpha_min: float = 0.1
    alpha_max: float = 0.7
    p: float = 1.0
    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda_item: float = 1.0
    K: int = 10
    ablation: AblationFlags = field(default_factory=AblationFlags)
    intra_list_state_propagation: bool = True
    warm_start_exposure: bool = False

    def __post_init__(self):
        if isinstance(self.ablation, dict):
            self.ablation = AblationFlags(**self.ablation)
        if not 0.0 <= self.alpha_min <= self.alpha_max <= 1.0:
            raise ValueError(
                f"need 0 <= alpha_min <= alpha_max <= 1, got {self.alpha_min}, {self.alpha_max}")
        if self.p <= 0:
            raise ValueError("p must be positive")
        if min(self.lambda1, self.lambda2, self.lambda_item) < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.K < 1:
            raise ValueError("K must be >= 1")


@dataclass
class JointUtilityBreakdown:
    item_id: str
    position: int
    u_user_raw: float
    u_user_norm: float
    u_platform_norm: float
    u_dgu_gain: float
    u_mgu_gain: float
    u_item_raw: float
    u_item_norm: float
    alpha_k: float
    g: float
    u_expo_item: float
    u_joint: float


def position_weight(k: int, K: int | None = None) -> float:
    """``omega_k = v(k) / v(1)``; 1 at the top and strictly decreasing.

    ``K`` is accepted for interface symmetry; the weight does not depend on it.
    """
    return exposure_decay(k) / exposure_decay(1)


def participation_alpha(k: int, cfg: RerankConfig) -> float:
    if cfg.ablation.static_alpha is not None:
        return cfg.ablation.static_alpha
    return cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * position_weight(k, cfg.K) ** cfg.p


def ctr_estimate(user: UserProfile, item: ItemRecord) -> float:
    return sigmoid(cosine_similarity(user.embedding, item.embedding))


def user_utility(r_llm: float, sim: float) -> float:
    return r_llm * math.exp(sim)


def item_utility(k: int, ctr: float) -> float:
    return exposure_decay(k) * ctr


def minmax_normalize(values: Sequence[float]) -> list[float]:
    """Rescale to [0, 1]; a constant list maps to all ones."""
    if len(values) == 0:
        raise ValueError("cannot normalize an empty list")
    lo = min(values)
    hi = max(values)
    if hi == lo:
        return [1.0] * len(values)
    span = hi - lo
    return [(x - lo) / span for x in values]


def _gains(mass: np.ndarray, g: int, delta: float, q: np.ndarray) -> tuple[float, float]:
    total = mass.sum()
    before = mass / total if total > 0 else q
    after_mass = mass.copy()
    after_mass[g] += delta
    after = after_mass / after_mass.sum()
    return dgu_at_k(before, q) - dgu_at_k(after, q), mgu_at_k(before, q) - mgu_at_k(after, q)


def marginal_fairness_gain(
    item: ItemRecord | str,
    k: int,
    state: ExposureState,
    groups: PopularityGroups,
) -> tuple[float, float]:
    """Reduction in (DGU, MGU) from granting ``item`` an extra ``v(k)`` of exposure.

    Positive means the placement makes group exposure closer to the historical
    shares. With zero total exposure the shares are taken to be the historical
    ones, so the very first placement can only have a non-positive gain.
    """
    item_id = item.item_id if isinstance(item, ItemRecord) else item
    mass = group_exposure_mass(state, groups)
    q = np.asarray(groups.historical_share, dtype=float)
    return _gains(mass, groups.group_of[item_id], exposure_decay(k), q)


def platform_utility(dgu_gain_norm: float, mgu_gain_norm: float, cfg: RerankConfig) -> float:
    return cfg.lambda1 * dgu_gain_norm + cfg.lambda2 * mgu_gain_norm


def joint_utility(
    user_n: float,
    platform_n: float,
    item_n: float,
    k: int,
    cfg: RerankConfig,
    item_id: str = "",
    **raw: float,
) -> JointUtilityBreakdown:
    """Position-conditioned joint utility ``g * item_n ** lambda_item``.

    Extra keyword arguments (``u_user_raw``, ``u_dgu_gain`` ...) are carried
    into the breakdown untouched.
    """
    flags = cfg.ablation
    alpha = participation_alpha(k, cfg)
    user_term = 0.0 if flags.disable_user_utility else alpha * user_n
    platform_term = 0.0 if flags.disable_platform_utility else (1.0 - alpha) * platform_n
    g = user_term + platform_term
    expo = 1.0 if flags.disable_item_utility else item_n ** cfg.lambda_item
    return JointUtilityBreakdown(
        item_id=item_id,
        position=k,
        u_user_raw=raw.get("u_user_raw", math.nan),
        u_user_norm=user_n,
        u_platform_norm=platform_n,
        u_dgu_gain=raw.get("u_dgu_gain", math.nan),
        u_mgu_gain=raw.get("u_mgu_gain", math.nan),
        u_item_raw=raw.get("u_item_raw", math.nan),
        u_item_norm=item_n,
        alpha_k=alpha,
        g=g,
        u_expo_item=expo,
        u_joint=g * expo,
    )


def _embedding_sim(user: UserProfile, item: ItemRecord, cfg: RerankConfig, round_: int) -> float | None:
    flags = cfg.ablation
    if flags.disable_embedding_sim:
        return None
    if flags.randomize_embedding_sim is not None:
        rng = np.random.default_rng(
            stable_seed(flags.randomize_embedding_sim, round_, user.user_id, item.item_id))
        return float(rng.uniform(-1.0, 1.0))
    return cosine_similarity(user.embedding, item.embedding)


def _construct(user, stage1, state, groups, cfg, catalog, forced=None):
    candidates = list(stage1.ranking)
    if not candidates:
        raise ValueError("empty candidate set")
    scores = stage1.scores
    raw_user = {}
    ctr = {}
    for item_id in candidates:
        item = catalog[item_id]
        sim = _embedding_sim(user, item, cfg, state.round)
        raw_user[item_id] = scores[item_id] if sim is None else user_utility(scores[item_id], sim)
        ctr[item_id] = ctr_estimate(user, item)

    q = np.asarray(groups.historical_share, dtype=float)
    mass = group_exposure_mass(state, groups)
    remaining = candidates  # kept in Stage-1 order so a strict > scan breaks ties by Stage-1 rank
    n_slots = min(cfg.K, len(candidates)) if forced is None else len(forced)
    chosen: list[str] = []
    breakdowns: list[JointUtilityBreakdown] = []

    for k in range(1, n_slots + 1):
        v = exposure_decay(k)
        gains = [_gains(mass, groups.group_of[i], v, q) for i in remaining]
        users_n = minmax_normalize([raw_user[i] for i in remaining])
        dgu_n = minmax_normalize([d for d, _ in gains])
        mgu_n = minmax_normalize([m for _, m in gains])
        items_raw = [item_utility(k, ctr[i]) for i in remaining]
        items_n = minmax_normalize(items_raw)

        best = None
        for idx, item_id in enumerate(remaining):
            bd = joint_utility(
                users_n[idx],
                platform_utility(dgu_n[idx], mgu_n[idx], cfg),
                items_n[idx],
                k,
                cfg,
                item_id=item_id,
                u_user_raw=raw_user[item_id],
                u_dgu_gain=gains[idx][0],
                u_mgu_gain=gains[idx][1],
                u_item_raw=items_raw[idx],
            )
            if forced is not None:
                if item_id == forced[k - 1]:
                    best = bd
            elif best is None or bd.u_joint > best.u_joint:
                best = bd
        if best is None:
            raise ValueError(f"forced item {forced[k - 1]!r} is not a remaining candidate")

        chosen.append(best.item_id)
        breakdowns.append(best)
        remaining = [i for i in remaining if i != best.item_id]
        if cfg.intra_list_state_propagation:
            mass = mass.copy()
            mass[groups.group_of[best.item_id]] += v
    return RankedList(tuple(chosen)), breakdowns


def greedy_rerank(
    user: UserProfile,
    stage1,
    state: ExposureState,
    groups: PopularityGroups,
    cfg: RerankConfig,
    catalog: Mapping[str, ItemRecord],
) -> tuple[RankedList, list[JointUtilityBreakdown]]:
    """Fill positions top-down, each with the remaining candidate of highest
    joint utility.

    All signals are min-max normalized over the candidates still available at
    that position. Ties go to the better Stage-1 rank. ``state`` is never
    mutated; earlier placements in the same list are credited on a private
    copy of the group exposure when ``cfg.intra_list_state_propagation`` is on.
    """
    return _construct(user, stage1, state, groups, cfg, catalog)


def score_fixed_order(
    user: UserProfile,
    stage1,
    order: Sequence[str],
    state: ExposureState,
    groups: PopularityGroups,
    cfg: RerankConfig,
    catalog: Mapping[str, ItemRecord],
) -> list[JointUtilityBreakdown]:
    """Joint-utility breakdowns for a list whose order is already decided."""
    return _construct(user, stage1, state, groups, cfg, catalog, forced=list(order))[1]


def apply_exposure_update(state: ExposureState, ranked: RankedList | Sequence[str]) -> ExposureState:
    """Credit ``v(k)`` to the item at each position; returns a new state."""
    entries = list(ranked)
    if len(set(entries)) != len(entries):
        raise ValueError("served list contains duplicates")
    exposure = dict(state.exposure)
    for k, item_id in enumerate(entries, start=1):
        exposure[item_id] = exposure.get(item_id, 0.0) + exposure_decay(k)
    return ExposureState(exposure, state.round + 1)
