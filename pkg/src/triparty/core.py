"""Domain types shared across the package, plus the small pieces of math
everything else leans on."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class ItemRecord:
    item_id: str
    title: str
    category: str
    description: str
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)
    training_pop: int = 0

    def __post_init__(self):
        if self.training_pop < 0:
            raise ValueError(f"training_pop must be >= 0 for item {self.item_id}")


@dataclass
class UserProfile:
    user_id: str
    profile_text: str
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)
    memory: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    timestamp: int
    weight: float = 1.0

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")
        if not self.weight > 0:
            raise ValueError("weight must be positive")


@dataclass
class ExposureState:
    """Cumulative per-item exposure ``e^t`` and the round counter ``t``."""

    exposure: dict[str, float] = field(default_factory=dict)
    round: int = 0

    def copy(self) -> "ExposureState":
        return ExposureState(dict(self.exposure), self.round)

    def get(self, item_id: str) -> float:
        return self.exposure.get(item_id, 0.0)

    def total(self) -> float:
        return math.fsum(self.exposure.values())


@dataclass(frozen=True)
class RankedList:
    entries: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("RankedList contains duplicate item ids")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def position(self, item_id: str) -> int | None:
        """1-based position of ``item_id`` or None when absent."""
        try:
            return self.entries.index(item_id) + 1
        except ValueError:
            return None


@dataclass(frozen=True)
class PopularityGroups:
    group_of: Mapping[str, int]
    G: int
    historical_share: np.ndarray

    def members(self, g: int) -> list[str]:
        return [i for i, gi in self.group_of.items() if gi == g]

    def sizes(self) -> list[int]:
        counts = Counter(self.group_of.values())
        return [counts.get(g, 0) for g in range(self.G)]


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    value = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, value))


def sigmoid(x: float) -> float:
    # split branches so large |x| never overflows exp
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def exposure_decay(k: int) -> float:
    """Position bias ``v(k) = 1 / log2(k + 2)`` for a 1-based position."""
    if k < 1:
        raise ValueError(f"position must be >= 1, got {k}")
    return 1.0 / math.log2(k + 2)


def stable_seed(*parts: object) -> int:
    """Process-independent 64-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def build_popularity_groups(
    items: Iterable[ItemRecord] | Iterable[str],
    interactions: Iterable[Interaction],
    G: int = 8,
) -> PopularityGroups:
    """Split the catalog into ``G`` equal-size groups by training interaction count.

    Items are ordered by count descending with ties broken by ascending id;
    the first ``len(catalog) % G`` groups take one extra item. Group 0 is the
    most popular. ``historical_share`` is each group's fraction of training
    interactions, or uniform when there are no interactions at all.
    """
    ids = [i.item_id if isinstance(i, ItemRecord) else str(i) for i in items]
    if G < 2:
        raise ValueError("G must be >= 2")
    if not ids:
        raise ValueError("catalog is empty")
    if G > len(ids):
        raise ValueError(f"G={G} exceeds catalog size {len(ids)}")

    catalog = set(ids)
    counts: Counter[str] = Counter()
    for it in interactions:
        if it.item_id in catalog:
            counts[it.item_id] += 1

    ordered = sorted(ids, key=lambda i: (-counts[i], i))
    base, extra = divmod(len(ordered), G)
    group_of: dict[str, int] = {}
    start = 0
    for g in range(G):
        size = base + (1 if g < extra else 0)
        for item_id in ordered[start:start + size]:
            group_of[item_id] = g
        start += size

    per_group = np.zeros(G)
    for item_id, c in counts.items():
        per_group[group_of[item_id]] += c
    total = per_group.sum()
    share = per_group / total if total > 0 else np.full(G, 1.0 / G)
    return PopularityGroups(group_of=group_of, G=G, historical_share=share)
