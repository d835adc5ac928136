"""Seeded synthetic benchmark: Zipf item popularity, topic-structured users,
and hashed bag-of-token embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import tokens
from .core import Interaction, ItemRecord, UserProfile, stable_seed

TOPICS: dict[str, list[str]] = {
    "country": ["storytelling", "fiddle", "heartland", "ballad", "twang", "honky", "porch", "rodeo", "banjo", "highway"],
    "jazz": ["swing", "bebop", "saxophone", "improvised", "smoky", "trumpet", "standards", "brushed", "modal", "lounge"],
    "rock": ["riffs", "distorted", "anthemic", "garage", "stadium", "power", "drums", "rebellious", "grunge", "loud"],
    "classical": ["symphony", "orchestral", "sonata", "baroque", "violin", "concerto", "chamber", "opera", "piano", "romantic"],
    "hiphop": ["rhymes", "beats", "turntable", "lyrical", "boom", "flow", "sampled", "street", "cypher", "freestyle"],
    "folk": ["acoustic", "campfire", "traditional", "harmonies", "mandolin", "ballads", "rustic", "fingerpicked", "village", "earnest"],
    "blues": ["delta", "slide", "soulful", "harmonica", "twelve", "gritty", "lament", "juke", "shuffle", "bending"],
    "electronic": ["synth", "techno", "pulsing", "ambient", "bass", "house", "glitch", "modular", "dancefloor", "trance"],
    "metal": ["heavy", "thrash", "shredding", "doom", "screaming", "double", "dark", "epic", "brutal", "headbanging"],
    "reggae": ["dub", "offbeat", "roots", "island", "skank", "sunny", "riddim", "rasta", "laidback", "steppers"],
    "soul": ["gospel", "groove", "motown", "velvet", "horns", "falsetto", "funky", "tender", "warm", "rhythm"],
    "latin": ["salsa", "bolero", "tropical", "percussion", "tango", "cumbia", "passionate", "guitar", "fiesta", "bossa"],
}
TITLE_WORDS = [
    "Journey", "River", "Midnight", "Echo", "Horizon", "Golden", "Silent", "Electric", "Summer", "Winter",
    "Shadow", "Light", "Velvet", "Broken", "Wild", "Lonely", "Northern", "Crimson", "Distant", "Morning",
    "Paper", "Stone", "Glass", "Ocean", "Desert", "City", "Harbor", "Garden", "Thunder", "Silver",
]


@dataclass
class SyntheticSpec:
    n_users: int = 200
    n_items: int = 400
    skew: float = 1.2
    seed: int = 7
    dim: int = 64
    n_groups: int = 8
    min_interactions: int = 6
    mean_extra_interactions: float = 6.0
    affinity: float = 3.0
    descriptor_weight: float = 0.5
    embedding_noise: float = 0.15
    embed_description: bool = True

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.n_items < 8 * self.n_groups:
            raise ValueError(f"n_items must be >= {8 * self.n_groups} for {self.n_groups} groups")
        if self.skew < 0:
            raise ValueError("skew must be >= 0")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.min_interactions < 2:
            raise ValueError("min_interactions must be >= 2")


def hashed_embedding(text_tokens: list[str], dim: int, noise: float, key: str, seed: int) -> np.ndarray:
    """Signed feature hashing of a token bag plus a small per-entity jitter,
    unit-normalized."""
    vec = np.zeros(dim)
    for tok in text_tokens:
        h = stable_seed("tok", tok)
        vec[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    jitter = np.random.default_rng(stable_seed(seed, "jitter", key)).normal(size=dim)
    vec = vec / max(np.linalg.norm(vec), 1.0) + noise * jitter / np.linalg.norm(jitter)
    return vec / np.linalg.norm(vec)


def generate_synthetic_dataset(spec: SyntheticSpec):
    """Return (items, users, interactions) with embeddings attached.

    Item popularity weights follow ``rank ** -skew``; popular ranks lean
    towards a few topics so that embedding structure and popularity groups
    are correlated. Each user draws interactions without replacement with
    probability proportional to popularity times ``exp(affinity * match)``.
    """
    rng = np.random.default_rng(spec.seed)
    topic_names = list(TOPICS)
    n_topics = len(topic_names)

    item_topic = rng.permutation(np.arange(spec.n_items) % n_topics)
    topic_bias = rng.permutation(np.linspace(1.0, 0.0, n_topics))
    pop_score = topic_bias[item_topic] + rng.normal(scale=0.75, size=spec.n_items)
    order = np.argsort(-pop_score, kind="stable")
    rank = np.empty(spec.n_items)
    rank[order] = np.arange(1, spec.n_items + 1)
    pop_weight = rank ** -spec.skew

    width = len(str(spec.n_items - 1))
    items: dict[str, ItemRecord] = {}
    item_desc_tokens: list[set[str]] = []
    for idx in range(spec.n_items):
        item_id = f"i{idx:0{width}d}"
        topic = topic_names[item_topic[idx]]
        second = topic_names[(item_topic[idx] + 1 + rng.integers(n_topics - 1)) % n_topics]
        descs = list(rng.choice(TOPICS[topic], size=3, replace=False))
        extra = str(rng.choice(TOPICS[second]))
        title = " ".join(rng.choice(TITLE_WORDS, size=2, replace=False))
        description = f"A {topic} record with {descs[0]}, {descs[1]} and {descs[2]} moments, with a touch of {extra}."
        item_desc_tokens.append(set(descs) | {extra})
        emb_text = f"{title} {topic} {description}" if spec.embed_description else f"{title} {topic}"
        emb = hashed_embedding(tokens(emb_text), spec.dim, spec.embedding_noise, item_id, spec.seed)
        items[item_id] = ItemRecord(item_id, title, topic, description, emb)

    topic_pop = np.bincount(item_topic, weights=pop_weight, minlength=n_topics)
    topic_pop = topic_pop / topic_pop.sum()
    item_ids = list(items)

    width_u = len(str(spec.n_users - 1))
    users: dict[str, UserProfile] = {}
    interactions: list[Interaction] = []
    for u in range(spec.n_users):
        user_id = f"u{u:0{width_u}d}"
        primary = int(rng.choice(n_topics, p=topic_pop))
        secondary = int((primary + 1 + rng.integers(n_topics - 1)) % n_topics)
        p_name, s_name = topic_names[primary], topic_names[secondary]
        liked_p = list(rng.choice(TOPICS[p_name], size=4, replace=False))
        liked_s = list(rng.choice(TOPICS[s_name], size=2, replace=False))
        profile = (
            f"I mostly listen to {p_name}, especially {liked_p[0]}, {liked_p[1]}, "
            f"{liked_p[2]} and {liked_p[3]} records. Now and then I enjoy "
            f"{s_name} with {liked_s[0]} or {liked_s[1]} flavour."
        )
        emb = hashed_embedding(tokens(profile), spec.dim, spec.embedding_noise, user_id, spec.seed)
        users[user_id] = UserProfile(user_id, profile, emb)

        liked = set(liked_p) | set(liked_s)
        match = np.array([
            2.0 * (item_topic[i] == primary) + 1.0 * (item_topic[i] == secondary)
            + spec.descriptor_weight * len(item_desc_tokens[i] & liked)
            for i in range(spec.n_items)
        ])
        w = pop_weight * np.exp(spec.affinity * match)
        n_u = min(spec.n_items - 1, spec.min_interactions + int(rng.poisson(spec.mean_extra_interactions)))
        chosen = rng.choice(spec.n_items, size=n_u, replace=False, p=w / w.sum())
        t = 1_500_000_000 + int(rng.integers(0, 10_000_000))
        for i in chosen:
            t += int(rng.integers(60, 86_400))
            interactions.append(Interaction(user_id, item_ids[i], t))

    # training_pop excludes each user's held-out (latest) interaction
    latest: dict[str, Interaction] = {}
    for it in interactions:
        cur = latest.get(it.user_id)
        if cur is None or (it.timestamp, it.item_id) > (cur.timestamp, cur.item_id):
            latest[it.user_id] = it
    held_out = {id(it) for it in latest.values()}
    counts = dict.fromkeys(items, 0)
    for it in interactions:
        if id(it) not in held_out:
            counts[it.item_id] += 1
    items = {
        k: ItemRecord(r.item_id, r.title, r.category, r.description, r.embedding, counts[k])
        for k, r in items.items()
    }
    return items, users, interactions
