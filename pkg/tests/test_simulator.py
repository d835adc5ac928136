import dataclasses
import math

import httpx
import numpy as np
import pytest

from conftest import tiny_dataset
from triparty.agents import AgentBackendConfig
from triparty.core import Interaction, exposure_decay
from triparty.llm import ChatClient
from triparty.metrics import evaluate_user
from triparty.rerank import RerankConfig
from triparty.simulator import (
    VARIANTS,
    SimulationConfig,
    leave_one_out_split,
    run_ablation,
    run_simulation,
    sample_candidates,
    sweep_alpha_max,
    variant_config,
)


def test_leave_one_out():
    inter = [Interaction("u", "a", 10), Interaction("u", "b", 30), Interaction("u", "c", 20),
             Interaction("solo", "a", 5),
             Interaction("tie", "a", 7), Interaction("tie", "b", 7)]
    train, test = leave_one_out_split(inter)
    assert test["u"].item_id == "b" and test["tie"].item_id == "b"
    assert "solo" not in test and all(it.user_id != "solo" for it in train)
    assert sorted(it.item_id for it in train if it.user_id == "u") == ["a", "c"]
    with pytest.raises(ValueError):
        leave_one_out_split([])


def test_sample_candidates():
    catalog = [f"i{j}" for j in range(30)]
    cands = sample_candidates("i3", catalog, {"i1", "i2"}, 10, np.random.default_rng(5))
    assert len(set(cands)) == 10 and "i3" in cands and not {"i1", "i2"} & set(cands)
    again = sample_candidates("i3", catalog, {"i1", "i2"}, 10, np.random.default_rng(5))
    assert cands == again
    exact = sample_candidates("i0", catalog[:10], set(), 10, np.random.default_rng(1))
    assert sorted(exact) == sorted(catalog[:10])
    with pytest.raises(ValueError, match="short by 2"):
        sample_candidates("i0", catalog[:10], {"i1", "i2"}, 10, np.random.default_rng(1))


def test_config_validation():
    for bad in (dict(n_candidates=1), dict(user_order="random"), dict(rounds=-1),
                dict(stage1_mode="x"), dict(exposure_weighting="x")):
        with pytest.raises(ValueError):
            SimulationConfig(**bad)
    cfg = SimulationConfig(rerank={"K": 3}, backend={"mock_beta": 0.0})
    assert cfg.rerank.K == 3 and cfg.backend.mock_beta == 0.0


def test_run_on_tiny_dataset():
    ds = tiny_dataset()
    log = run_simulation(ds, SimulationConfig(n_candidates=5, n_groups=2, rerank=RerankConfig(K=5)))
    assert [r.t for r in log.rounds] == [0, 1, 2]
    assert {r.user_id for r in log.rounds} == {"u0", "u1", "u2"}
    for r in log.rounds:
        assert r.ground_truth in r.candidates and len(r.stage2) == 5
        assert r.evaluation.mrr > 0
    assert log.report.n_users == 3
    assert log.final_state.round == 3
    assert ds.users["u0"].memory == []  # the run works on copies


def test_single_user_pass_through_corner():
    ds = tiny_dataset()
    ds = dataclasses.replace(ds, interactions=[i for i in ds.interactions if i.user_id == "u0"])
    cfg = SimulationConfig(n_candidates=6, n_groups=2, backend=AgentBackendConfig(mock_beta=0),
                           rerank=RerankConfig(alpha_min=1, alpha_max=1, lambda_item=0))
    log = run_simulation(ds, cfg)
    (r,) = log.rounds
    assert r.stage2 == r.stage1
    assert log.report.ndcg_at[10] == evaluate_user("u0", r.stage1, r.ground_truth, r.ctr.__getitem__).ndcg_at[10]


def test_zero_rounds_gives_empty_log():
    log = run_simulation(tiny_dataset(), SimulationConfig(n_candidates=5, n_groups=2, rounds=0))
    assert log.rounds == [] and log.report is None
    with pytest.raises(ValueError):
        log.compute_report()


def test_rounds_cap_and_shuffled_order(small_dataset):
    base = SimulationConfig(rounds=7)
    a = run_simulation(small_dataset, base)
    b = run_simulation(small_dataset, dataclasses.replace(base, user_order="shuffled"))
    assert len(a.rounds) == len(b.rounds) == 7
    assert [r.user_id for r in a.rounds] != [r.user_id for r in b.rounds]


def test_exposure_conservation(small_dataset):
    log = run_simulation(small_dataset, SimulationConfig())
    per_list = math.fsum(exposure_decay(k) for k in range(1, 11))
    assert abs(log.final_state.total() - len(log.rounds) * per_list) <= 1e-6
    for r in log.rounds:
        assert math.isclose(sum(r.exposure_delta.values()), per_list, abs_tol=1e-9)


def test_warm_start_seeds_exposure(small_dataset):
    cfg = SimulationConfig(rounds=0, rerank=RerankConfig(warm_start_exposure=True))
    log = run_simulation(small_dataset, cfg)
    assert math.isclose(log.final_state.total(), 1.0)


def test_variant_configs():
    base = SimulationConfig(seed=9)
    assert variant_config(base, "a").stage1_mode == "random"
    assert not variant_config(base, "b").promotions and not variant_config(base, "b").stage2
    assert variant_config(base, "no_stage2").stage2 is False
    assert variant_config(base, "e", 0.2).rerank.ablation.static_alpha == 0.2
    assert variant_config(base, "i").rerank.ablation.randomize_embedding_sim == 9
    assert base.rerank.ablation.static_alpha is None  # base untouched
    with pytest.raises(ValueError):
        variant_config(base, "z")


def test_variant_c_serves_stage1(small_dataset):
    full, c = run_ablation(small_dataset, SimulationConfig(rounds=15), "c")
    assert all(r.stage2 == r.stage1 for r in c.rounds)
    direct = [evaluate_user(r.user_id, r.stage1, r.ground_truth, r.ctr.__getitem__).ndcg_at[5] for r in c.rounds]
    assert c.report.ndcg_at[5] == pytest.approx(np.mean(direct), abs=1e-12)


@pytest.mark.parametrize("variant", list("defghi"))
def test_reranker_variants_share_candidates(small_dataset, variant):
    full, var = run_ablation(small_dataset, SimulationConfig(rounds=10), variant)
    assert [r.candidates for r in full.rounds] == [r.candidates for r in var.rounds]
    assert [r.stage1 for r in full.rounds] == [r.stage1 for r in var.rounds]


def test_sweep_cardinality_and_validation(small_dataset):
    rows = sweep_alpha_max(small_dataset, SimulationConfig(rounds=5), [0.1, 0.5, 1.0])
    assert [a for a, _ in rows] == [0.1, 0.5, 1.0]
    with pytest.raises(ValueError):
        sweep_alpha_max(small_dataset, SimulationConfig(rounds=5), [0.05])


def test_llm_failures_never_abort_a_run(small_dataset):
    calls = []

    def handler(req):
        calls.append(req)
        return httpx.Response(503)

    client = ChatClient("http://llm.test", "m", transport=httpx.MockTransport(handler),
                        max_retries=1, sleep=lambda s: None)
    cfg = SimulationConfig(rounds=2, backend=AgentBackendConfig(backend="llm", llm_model="m",
                                                                llm_max_retries=1, llm_concurrency=1))
    log = run_simulation(small_dataset, cfg, client)
    assert len(log.rounds) == 2 and all(r.stage1_fallback for r in log.rounds)
    assert calls


def test_variant_names_cover_a_to_i():
    assert sorted(VARIANTS) == list("abcdefghi")
