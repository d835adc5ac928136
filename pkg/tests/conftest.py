import numpy as np
import pytest

from triparty.core import Interaction, ItemRecord, UserProfile
from triparty.simulator import Dataset
from triparty.synthetic import SyntheticSpec, generate_synthetic_dataset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def benchmark():
    """Skew-synthetic benchmark: 200 users, 400 items, skew 1.2, seed 7."""
    items, users, inter = generate_synthetic_dataset(SyntheticSpec())
    return Dataset(items, users, inter)


@pytest.fixture(scope="session")
def small_dataset():
    items, users, inter = generate_synthetic_dataset(
        SyntheticSpec(n_users=30, n_items=80, seed=3, dim=16))
    return Dataset(items, users, inter)


def make_item(item_id, vec, title="", category="", description=""):
    return ItemRecord(item_id, title or item_id, category, description,
                      embedding=np.asarray(vec, dtype=float))


def make_user(user_id, vec, profile=""):
    return UserProfile(user_id, profile, embedding=np.asarray(vec, dtype=float))


def tiny_dataset():
    """Hand-built set: 3 users, 12 items in a 2-d embedding space."""
    rng = np.random.default_rng(0)
    items = {f"i{j:02d}": make_item(f"i{j:02d}", rng.normal(size=2) + 0.1) for j in range(12)}
    users = {f"u{j}": make_user(f"u{j}", rng.normal(size=2) + 0.1) for j in range(3)}
    inter = [
        Interaction("u0", "i00", 1), Interaction("u0", "i01", 2), Interaction("u0", "i02", 3),
        Interaction("u1", "i00", 1), Interaction("u1", "i03", 5),
        Interaction("u2", "i00", 4), Interaction("u2", "i04", 4),
    ]
    return Dataset(items, users, inter)
