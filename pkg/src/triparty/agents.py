"""Stage-1 agents: item self-promotion and user-side relevance ranking.

Two backends are available. ``mock`` is a pure function of its inputs and is
what the simulator and tests use; ``llm`` talks to an OpenAI-compatible chat
endpoint and falls back to the mock on failure.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from .core import ItemRecord, RankedList, UserProfile, cosine_similarity
from .llm import ChatClient, LLMTransportError

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
_TOKEN_RE = re.compile(r"[^0-9a-z]+")
# "id: 7", "- [id] = 7", "'id' - 7" ...
_SCORE_LINE_RE = re.compile(
    r"^\s*(?:[-*]\s+)?[\[\"'`]?([^:=\"'`\[\]]+?)[\]\"'`]?\s*[:=\-]\s*(\d+(?:\.\d+)?)\s*$")


class PromotionUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class Promotion:
    item_id: str
    user_id: str
    text: str
    source: str = "mock"


@dataclass
class ItemAgentState:
    item_id: str
    memory: list[str] = field(default_factory=list)


@dataclass
class Stage1Result:
    user_id: str
    ranking: RankedList
    scores: dict[str, float]
    promotions: list[Promotion]
    fallback: bool = False


@dataclass
class AgentBackendConfig:
    backend: str = "mock"
    mock_beta: float = 1.0
    llm_endpoint: str = ""
    llm_model: str = ""
    llm_temperature: float = 0.0
    llm_max_retries: int = 3
    llm_timeout_ms: int = 30000
    llm_concurrency: int = 4

    def __post_init__(self):
        if self.backend not in ("mock", "llm"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mock_beta < 0:
            raise ValueError("mock_beta must be >= 0")
        if self.backend == "llm" and not self.llm_model:
            raise ValueError("llm backend needs llm_model")


def tokens(text: str) -> list[str]:
    """Lowercase alphanumeric tokens of length >= 3, in order of appearance."""
    return [t for t in _TOKEN_RE.split(text.lower()) if len(t) >= 3]


def jaccard(a: set[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def load_prompt(name: str) -> str:
    return resources.files("triparty").joinpath(f"prompts/{name}_{PROMPT_VERSION}.txt").read_text()


def mock_promotion_text(item: ItemRecord, user: UserProfile) -> str:
    """Template promotion that surfaces the user's interests the item shares."""
    item_tokens = set(tokens(" ".join((item.title, item.category, item.description))))
    seen: set[str] = set()
    aligned = []
    for t in tokens(user.profile_text):
        if t in item_tokens and t not in seen:
            seen.add(t)
            aligned.append(t)
    text = f'Discover "{item.title}" ({item.category}). {item.description}'.strip()
    if aligned:
        text += f" Made for you: it brings the {', '.join(aligned[:6])} you care about."
    return text


def generate_promotion(
    item: ItemRecord,
    agent: ItemAgentState,
    user: UserProfile,
    backend: AgentBackendConfig,
    client: ChatClient | None = None,
) -> Promotion:
    """Self-promotion of ``item`` addressed to ``user``.

    Raises PromotionUnavailable when the LLM backend gives up; callers decide
    whether to fall back (see :func:`generate_promotions`).
    """
    if backend.backend == "mock":
        return Promotion(item.item_id, user.user_id, mock_promotion_text(item, user), "mock")
    prompt = load_prompt("promotion").format(
        title=item.title,
        category=item.category,
        description=item.description,
        memory=" | ".join(agent.memory[-3:]) or "none",
        profile=user.profile_text or "unknown",
    )
    own = client is None
    client = client or ChatClient.from_config(backend)
    try:
        text = client.chat([{"role": "user", "content": prompt}]).strip()
    except LLMTransportError as exc:
        raise PromotionUnavailable(str(exc)) from exc
    finally:
        if own:
            client.close()
    if not text:
        raise PromotionUnavailable("empty promotion text")
    return Promotion(item.item_id, user.user_id, text, "llm")


def generate_promotions(
    items: Sequence[ItemRecord],
    agents: dict[str, ItemAgentState],
    user: UserProfile,
    backend: AgentBackendConfig,
    client: ChatClient | None = None,
) -> list[Promotion]:
    """Promotions for all candidates, in candidate order.

    LLM calls run with at most ``backend.llm_concurrency`` in flight. Any item
    whose call fails gets the mock promotion instead.
    """
    def one(item: ItemRecord) -> Promotion:
        agent = agents.setdefault(item.item_id, ItemAgentState(item.item_id))
        try:
            return generate_promotion(item, agent, user, backend, client)
        except PromotionUnavailable as exc:
            logger.warning("promotion for %s unavailable (%s); using mock", item.item_id, exc)
            return Promotion(item.item_id, user.user_id, mock_promotion_text(item, user), "mock")

    if backend.backend == "mock" or backend.llm_concurrency <= 1:
        return [one(i) for i in items]
    with ThreadPoolExecutor(max_workers=backend.llm_concurrency) as pool:
        return list(pool.map(one, items))


def mock_score(user: UserProfile, item: ItemRecord, promotion_text: str, mock_beta: float) -> float:
    w = mock_beta / (1.0 + mock_beta)
    semantic = 0.5 * (cosine_similarity(user.embedding, item.embedding) + 1.0)
    overlap = jaccard(set(tokens(user.profile_text)), set(tokens(promotion_text)))
    return min(1.0, max(0.0, (1.0 - w) * semantic + w * overlap))


def rank_by_scores(scores: dict[str, float]) -> RankedList:
    """Non-increasing score order, ascending id on ties."""
    return RankedList(tuple(sorted(scores, key=lambda i: (-scores[i], i))))


def parse_scores(text: str, item_ids: Sequence[str]) -> dict[str, float] | None:
    """Read ``id: score`` lines (0-10) into [0, 1] scores; None unless every
    candidate got exactly one valid score."""
    wanted = set(item_ids)
    out: dict[str, float] = {}
    for line in text.splitlines():
        m = _SCORE_LINE_RE.match(line)
        if not m:
            continue
        item_id, value = m.group(1).strip(), float(m.group(2))
        if item_id in wanted and 0 <= value <= 10:
            out[item_id] = value / 10.0
    return out if set(out) == wanted else None


def evaluate_preferences(
    user: UserProfile,
    candidates: Sequence[tuple[ItemRecord, Promotion]],
    backend: AgentBackendConfig,
    client: ChatClient | None = None,
) -> Stage1Result:
    if not candidates:
        raise ValueError("no candidates to evaluate")
    promotions = [p for _, p in candidates]

    def mock_scores() -> dict[str, float]:
        return {item.item_id: mock_score(user, item, promo.text, backend.mock_beta)
                for item, promo in candidates}

    if backend.backend == "mock":
        scores = mock_scores()
        return Stage1Result(user.user_id, rank_by_scores(scores), scores, promotions)

    listing = "\n".join(f"[{item.item_id}] {item.title}: {promo.text}" for item, promo in candidates)
    prompt = load_prompt("scoring").format(profile=user.profile_text or "unknown", candidates=listing)
    ids = [item.item_id for item, _ in candidates]
    own = client is None
    client = client or ChatClient.from_config(backend)
    scores = None
    try:
        for _ in range(2):  # one re-ask on unparseable output
            try:
                scores = parse_scores(client.chat([{"role": "user", "content": prompt}]), ids)
            except LLMTransportError as exc:
                logger.warning("scoring call failed for user %s: %s", user.user_id, exc)
                break
            if scores is not None:
                break
    finally:
        if own:
            client.close()
    if scores is None:
        logger.warning("falling back to mock scores for user %s", user.user_id)
        scores = mock_scores()
        return Stage1Result(user.user_id, rank_by_scores(scores), scores, promotions, fallback=True)
    return Stage1Result(user.user_id, rank_by_scores(scores), scores, promotions)


def record_interaction(result: Stage1Result, user: UserProfile, agents: dict[str, ItemAgentState]):
    """Append this round's promotions and the user's verdict to agent memories."""
    for promo in result.promotions:
        agent = agents.setdefault(promo.item_id, ItemAgentState(promo.item_id))
        rank = result.ranking.position(promo.item_id)
        agent.memory.append(f"pitched to {user.user_id}, ranked {rank}: {promo.text}")
    top = result.ranking.entries[0]
    user.memory.append(f"preferred {top} (score {result.scores[top]:.2f})")
