"""Closed-loop simulation: leave-one-out evaluation where each test user is one
round of Stage 1 -> Stage 2 -> exposure update."""

from __future__ import annotations

import dataclasses
import math
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .agents import (
    AgentBackendConfig,
    ItemAgentState,
    Promotion,
    Stage1Result,
    evaluate_preferences,
    generate_promotions,
    rank_by_scores,
    record_interaction,
)
from .core import (
    ExposureState,
    Interaction,
    ItemRecord,
    PopularityGroups,
    RankedList,
    UserProfile,
    build_popularity_groups,
    exposure_decay,
    stable_seed,
)
from .metrics import DEFAULT_KS, MetricReport, UserEval, aggregate, evaluate_user
from .rerank import (
    JointUtilityBreakdown,
    RerankConfig,
    apply_exposure_update,
    ctr_estimate,
    greedy_rerank,
    score_fixed_order,
)

logger = logging.getLogger(__name__)

VARIANTS = {
    "a": "no_stage1",
    "b": "no_promotion_no_stage2",
    "c": "no_stage2",
    "d": "no_platform_utility",
    "e": "static_alpha",
    "f": "no_user_utility",
    "g": "no_item_utility",
    "h": "no_emb_sim",
    "i": "random_emb_sim",
}


@dataclass
class Dataset:
    items: dict[str, ItemRecord]
    users: dict[str, UserProfile]
    interactions: list[Interaction]


@dataclass
class SimulationConfig:
    seed: int = 0
    n_candidates: int = 10
    rerank: RerankConfig = field(default_factory=RerankConfig)
    backend: AgentBackendConfig = field(default_factory=AgentBackendConfig)
    user_order: str = "dataset"
    rounds: int | None = None
    n_groups: int = 8
    metric_ks: tuple[int, ...] = DEFAULT_KS
    fairness_ks: tuple[int, ...] = (5, 10)
    exposure_weighting: str = "decay"
    # ablation switches on the pipeline itself (the re-ranker's own are in rerank.ablation)
    stage1_mode: str = "agents"
    promotions: bool = True
    stage2: bool = True

    def __post_init__(self):
        if isinstance(self.rerank, dict):
            self.rerank = RerankConfig(**self.rerank)
        if isinstance(self.backend, dict):
            self.backend = AgentBackendConfig(**self.backend)
        self.metric_ks = tuple(self.metric_ks)
        self.fairness_ks = tuple(self.fairness_ks)
        if self.n_candidates < 2:
            raise ValueError("n_candidates must be >= 2")
        if self.user_order not in ("dataset", "shuffled"):
            raise ValueError(f"unknown user_order {self.user_order!r}")
        if self.stage1_mode not in ("agents", "random"):
            raise ValueError(f"unknown stage1_mode {self.stage1_mode!r}")
        if self.rounds is not None and self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.exposure_weighting not in ("decay", "uniform"):
            raise ValueError(f"unknown exposure_weighting {self.exposure_weighting!r}")


@dataclass
class RoundRecord:
    t: int
    user_id: str
    ground_truth: str
    candidates: list[str]
    stage1: list[str]
    stage1_scores: dict[str, float]
    stage1_fallback: bool
    stage2: list[str]
    breakdowns: list[JointUtilityBreakdown]
    exposure_delta: dict[str, float]
    ctr: dict[str, float]
    evaluation: UserEval


@dataclass
class EpisodeLog:
    rounds: list[RoundRecord]
    groups: PopularityGroups
    config: SimulationConfig
    final_state: ExposureState
    report: MetricReport | None = None

    def compute_report(self) -> MetricReport:
        return aggregate(
            [r.evaluation for r in self.rounds],
            [r.stage2 for r in self.rounds],
            self.groups,
            self.config.fairness_ks,
            joint_utility_total=math.fsum(b.u_joint for r in self.rounds for b in r.breakdowns),
            weighting=self.config.exposure_weighting,
        )


def leave_one_out_split(
    interactions: Iterable[Interaction],
) -> tuple[list[Interaction], dict[str, Interaction]]:
    """Hold out each user's latest interaction (ties: largest item id).

    Users with fewer than two interactions are dropped entirely.
    """
    by_user: dict[str, list[Interaction]] = defaultdict(list)
    for it in interactions:
        by_user[it.user_id].append(it)
    if not by_user:
        raise ValueError("no interactions to split")
    train: list[Interaction] = []
    test: dict[str, Interaction] = {}
    dropped = 0
    for user_id, rows in by_user.items():
        if len(rows) < 2:
            dropped += 1
            continue
        held = max(rows, key=lambda it: (it.timestamp, it.item_id))
        test[user_id] = held
        train.extend(it for it in rows if it is not held)
    if dropped:
        logger.warning("dropped %d user(s) with fewer than 2 interactions", dropped)
    return train, test


def sample_candidates(
    test_item: str,
    catalog: Sequence[str],
    exclude: set[str],
    n_candidates: int,
    rng: np.random.Generator,
) -> list[str]:
    """Ground truth plus ``n_candidates - 1`` uniform negatives, shuffled.

    Negatives are drawn without replacement from ``catalog`` minus ``exclude``
    (the user's training items) minus the ground truth.
    """
    eligible = [i for i in catalog if i not in exclude and i != test_item]
    need = n_candidates - 1
    if len(eligible) < need:
        raise ValueError(
            f"only {len(eligible)} eligible negatives for {test_item!r}, need {need} "
            f"(short by {need - len(eligible)})")
    picks = rng.choice(len(eligible), size=need, replace=False)
    cands = [test_item] + [eligible[j] for j in picks]
    return [cands[j] for j in rng.permutation(len(cands))]


def _user_order(test_users: list[str], cfg: SimulationConfig) -> list[str]:
    if cfg.user_order == "shuffled":
        rng = np.random.default_rng(stable_seed(cfg.seed, "order"))
        test_users = [test_users[j] for j in rng.permutation(len(test_users))]
    if cfg.rounds is not None:
        test_users = test_users[: cfg.rounds]
    return test_users


def _initial_state(items: Mapping[str, ItemRecord], train: list[Interaction], cfg: RerankConfig) -> ExposureState:
    exposure = dict.fromkeys(items, 0.0)
    if cfg.warm_start_exposure and train:
        for it in train:
            exposure[it.item_id] = exposure.get(it.item_id, 0.0) + 1.0
        total = len(train)
        exposure = {k: v / total for k, v in exposure.items()}
    return ExposureState(exposure, 0)


def _stage1(user, cand_items, agents, cfg: SimulationConfig, client) -> Stage1Result:
    if cfg.stage1_mode == "random":
        rng = np.random.default_rng(stable_seed(cfg.seed, "stage1-random", user.user_id))
        draws = rng.random(len(cand_items))
        scores = {item.item_id: float(x) for item, x in zip(cand_items, draws)}
        promos = [Promotion(i.item_id, user.user_id, "", "mock") for i in cand_items]
        return Stage1Result(user.user_id, rank_by_scores(scores), scores, promos)
    if cfg.promotions:
        promos = generate_promotions(cand_items, agents, user, cfg.backend, client)
    else:
        promos = [Promotion(i.item_id, user.user_id, "", "mock") for i in cand_items]
    return evaluate_preferences(user, list(zip(cand_items, promos)), cfg.backend, client)


def run_simulation(dataset: Dataset, cfg: SimulationConfig, client=None) -> EpisodeLog:
    """Serve every test user once, in arrival order, carrying exposure across rounds."""
    train, test = leave_one_out_split(dataset.interactions)
    groups = build_popularity_groups(list(dataset.items.values()), train, cfg.n_groups)
    train_items: dict[str, set[str]] = defaultdict(set)
    for it in train:
        train_items[it.user_id].add(it.item_id)

    catalog_ids = sorted(dataset.items)
    # copies so agent memory written during the run never leaks into the dataset
    users = {u: dataclasses.replace(p, memory=list(p.memory)) for u, p in dataset.users.items()}
    agents: dict[str, ItemAgentState] = {}
    state = _initial_state(dataset.items, train, cfg.rerank)
    test_users = _user_order([u for u in users if u in test], cfg)

    records: list[RoundRecord] = []
    for t, user_id in enumerate(test_users):
        user = users[user_id]
        gt = test[user_id].item_id
        rng = np.random.default_rng(stable_seed(cfg.seed, "candidates", user_id))
        cands = sample_candidates(gt, catalog_ids, train_items[user_id], cfg.n_candidates, rng)
        cand_items = [dataset.items[i] for i in cands]

        s1 = _stage1(user, cand_items, agents, cfg, client)
        if cfg.stage2:
            served, breakdowns = greedy_rerank(user, s1, state, groups, cfg.rerank, dataset.items)
        else:
            served = RankedList(s1.ranking.entries[: cfg.rerank.K])
            breakdowns = score_fixed_order(user, s1, served.entries, state, groups, cfg.rerank, dataset.items)
        record_interaction(s1, user, agents)

        state = apply_exposure_update(state, served)
        ctr = {i.item_id: ctr_estimate(user, i) for i in cand_items}
        records.append(RoundRecord(
            t=t,
            user_id=user_id,
            ground_truth=gt,
            candidates=cands,
            stage1=list(s1.ranking.entries),
            stage1_scores=s1.scores,
            stage1_fallback=s1.fallback,
            stage2=list(served.entries),
            breakdowns=breakdowns,
            exposure_delta={i: exposure_decay(k) for k, i in enumerate(served.entries, start=1)},
            ctr=ctr,
            evaluation=evaluate_user(user_id, served, gt, ctr.__getitem__, cfg.metric_ks),
        ))

    log = EpisodeLog(records, groups, cfg, state)
    if records:
        log.report = log.compute_report()
    return log


def variant_config(base: SimulationConfig, variant: str, static_alpha: float = 0.1) -> SimulationConfig:
    """Configuration for one ablation variant, keyed by letter (a-i) or name."""
    key = variant if variant in VARIANTS else {v: k for k, v in VARIANTS.items()}.get(variant)
    if key is None:
        raise ValueError(f"unknown ablation variant {variant!r}")
    rr = base.rerank
    flags = dataclasses.replace(rr.ablation)
    cfg_changes: dict = {}
    if key == "a":
        cfg_changes = {"stage1_mode": "random", "promotions": False}
    elif key == "b":
        cfg_changes = {"promotions": False, "stage2": False}
    elif key == "c":
        cfg_changes = {"stage2": False}
    elif key == "d":
        flags.disable_platform_utility = True
    elif key == "e":
        flags.static_alpha = static_alpha
    elif key == "f":
        flags.disable_user_utility = True
    elif key == "g":
        flags.disable_item_utility = True
    elif key == "h":
        flags.disable_embedding_sim = True
    elif key == "i":
        flags.randomize_embedding_sim = base.seed
    rerank = dataclasses.replace(rr, ablation=flags)
    return dataclasses.replace(base, rerank=rerank, **cfg_changes)


def run_ablation(dataset: Dataset, base: SimulationConfig, variant: str,
                 static_alpha: float = 0.1, client=None) -> tuple[EpisodeLog, EpisodeLog]:
    """Full model and one variant on identical seeds."""
    variant_cfg = variant_config(base, variant, static_alpha)
    return run_simulation(dataset, base, client), run_simulation(dataset, variant_cfg, client)


def sweep_alpha_max(dataset: Dataset, base: SimulationConfig, grid: Sequence[float],
                    client=None) -> list[tuple[float, MetricReport]]:
    out = []
    for a in grid:
        if not base.rerank.alpha_min <= a <= 1.0:
            raise ValueError(f"alpha_max {a} outside [{base.rerank.alpha_min}, 1]")
        cfg = dataclasses.replace(base, rerank=dataclasses.replace(base.rerank, alpha_max=float(a)))
        log = run_simulation(dataset, cfg, client)
        out.append((float(a), log.report))
    return out
