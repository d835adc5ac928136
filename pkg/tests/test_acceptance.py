"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (also repeated in the pytest terminal
summary). Run just this file with ``pytest tests/test_acceptance.py -v``.
"""

import dataclasses
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import ACCEPTANCE_LINES
from instances import oracle_greedy, package_greedy, random_instance
from triparty.agents import AgentBackendConfig
from triparty.core import exposure_decay, sigmoid
from triparty.dataio import results_jsonl
from triparty.metrics import dgu_at_k, mgu_at_k, mrr, ndcg_at_k
from triparty.rerank import AblationFlags, RerankConfig, participation_alpha
from triparty.simulator import SimulationConfig, run_ablation, run_simulation, sweep_alpha_max

GRID = [0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 1.0]
BASE = SimulationConfig()  # seed 0, mock backend, alpha_min 0.1


def verdict(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_formula_fixed_points():
    start = time.perf_counter()
    checks = [
        exposure_decay(2) == 0.5,
        exposure_decay(14) == 0.25,
        abs(exposure_decay(1) - 0.6309297536) <= 1e-9,
        sigmoid(0) == 0.5,
        participation_alpha(5, RerankConfig(alpha_min=0.3, alpha_max=0.3)) == 0.3,
        participation_alpha(1, RerankConfig(alpha_min=0.1, alpha_max=0.75)) == 0.75,
        abs(participation_alpha(2, RerankConfig(alpha_min=0.1, alpha_max=0.75)) - 0.6151128) <= 1e-7,
    ]
    ms = 1000 * (time.perf_counter() - start)
    verdict("1 formula fixed points", all(checks), f"{sum(checks)}/{len(checks)} exact values hold ({ms:.2f} ms)")


def test_criterion_2_greedy_matches_naive_oracle():
    start = time.perf_counter()
    matches = sum(package_greedy(random_instance(s))[0] == oracle_greedy(random_instance(s)) for s in range(100))
    elapsed = time.perf_counter() - start
    verdict("2 oracle equivalence", matches == 100 and elapsed < 5,
            f"{matches}/100 instances identical at every position ({elapsed:.2f} s, limit 5 s)")


def test_criterion_3_exposure_conservation(benchmark):
    log = run_simulation(benchmark, BASE)
    assert all(len(r.stage2) == BASE.rerank.K for r in log.rounds)
    expected = len(log.rounds) * math.fsum(exposure_decay(k) for k in range(1, BASE.rerank.K + 1))
    gap = abs(log.final_state.total() - expected)
    verdict("3 conservation", gap <= 1e-6, f"|sum e - T*sum v(k)| = {gap:.2e} over T={len(log.rounds)} (tol 1e-6)")


def test_criterion_4_metric_unit_suite():
    def at(pos):
        items = [f"x{j}" for j in range(9)]
        items.insert(pos - 1, "gt")
        return items

    uniform, one_hot = np.full(8, 1 / 8), np.eye(8)[0]
    exact = [
        ndcg_at_k(at(1), {"gt"}, 5) == 1.0,
        ndcg_at_k(at(3), {"gt"}, 5) == 0.5,
        ndcg_at_k(at(6), {"gt"}, 5) == 0.0,
        mrr(at(4), {"gt"}) == 0.25,
        abs(dgu_at_k(one_hot, uniform) - 0.21875) <= 1e-12,
        abs(mgu_at_k(one_hot, uniform) - 0.875) <= 1e-12,
        abs(dgu_at_k([0.8, 0.2], [0.5, 0.5]) - 0.3) <= 1e-12,
        abs(mgu_at_k([0.8, 0.2], [0.5, 0.5]) - 0.3) <= 1e-12,
        dgu_at_k(uniform, uniform) == 0.0 and mgu_at_k(uniform, uniform) == 0.0,
    ]
    rng = np.random.default_rng(2024)
    sandwich = 0
    for _ in range(1000):
        G = int(rng.integers(2, 9))
        p, q = rng.dirichlet(np.ones(G)), rng.dirichlet(np.ones(G))
        d, m = dgu_at_k(p, q), mgu_at_k(p, q)
        sandwich += d <= m + 1e-12 and m <= G * d + 1e-12
    verdict("4 metric unit suite", all(exact) and sandwich == 1000,
            f"{sum(exact)}/{len(exact)} hand values, DGU<=MGU<=G*DGU on {sandwich}/1000 random pairs")


@pytest.fixture(scope="module")
def sweep(benchmark):
    start = time.perf_counter()
    rows = sweep_alpha_max(benchmark, BASE, GRID)
    return dict(rows), time.perf_counter() - start


def test_criterion_5a_fairness_trend(sweep):
    reports, elapsed = sweep
    rho = spearmanr(GRID, [reports[a].dgu_at[10] for a in GRID]).statistic
    trend = ", ".join(f"{reports[a].dgu_at[10]:.4f}" for a in GRID)
    verdict("5a sweep: DGU@10 rises with alpha_max", rho >= 0.8 and elapsed < 120,
            f"Spearman {rho:.3f} (>= 0.8); DGU@10 [{trend}]; sweep {elapsed:.1f} s")


def test_criterion_5b_cumulative_eiu_stable(sweep):
    reports, _ = sweep
    eiu = [reports[a].eiu_cumulative for a in GRID]
    ratio = max(eiu) / min(eiu)
    verdict("5b sweep: cumulative EIU stable", ratio <= 1.05,
            f"max/min = {ratio:.4f} (<= 1.05); range {min(eiu):.4f}..{max(eiu):.4f}")


def test_criterion_5c_relevance_rises(sweep):
    reports, _ = sweep
    hi, lo = reports[0.7].ndcg_at[5], reports[0.1].ndcg_at[5]
    verdict("5c sweep: NDCG@5 at 0.7 > at 0.1", hi > lo, f"{hi:.4f} vs {lo:.4f}")


@pytest.fixture(scope="module")
def ablations(benchmark):
    start = time.perf_counter()
    full = run_simulation(benchmark, BASE).report
    out = {"full": full}
    for v in "ace":
        out[v] = run_ablation(benchmark, BASE, v, static_alpha=0.1)[1].report
    return out, time.perf_counter() - start


def test_criterion_6_ablation_differentials(ablations):
    r, elapsed = ablations
    full = r["full"]
    parts = {
        "(c) DGU@10 >= full": (r["c"].dgu_at[10] >= full.dgu_at[10], r["c"].dgu_at[10], full.dgu_at[10]),
        "(c) cumulative EIU <= full": (r["c"].eiu_cumulative <= full.eiu_cumulative,
                                       r["c"].eiu_cumulative, full.eiu_cumulative),
        "(a) NDCG@10 < full": (r["a"].ndcg_at[10] < full.ndcg_at[10], r["a"].ndcg_at[10], full.ndcg_at[10]),
        "(e) DGU@10 < full": (r["e"].dgu_at[10] < full.dgu_at[10], r["e"].dgu_at[10], full.dgu_at[10]),
    }
    detail = "; ".join(f"{k}: {a:.4f} vs {b:.4f} {'ok' if ok else 'VIOLATED'}" for k, (ok, a, b) in parts.items())
    ok = all(ok for ok, _, _ in parts.values()) and elapsed < 180
    verdict("6 ablation differentials", ok, f"{detail}; {elapsed:.1f} s")


def test_criterion_7_determinism(benchmark):
    start = time.perf_counter()
    a = results_jsonl(run_simulation(benchmark, BASE)).encode()
    b = results_jsonl(run_simulation(benchmark, BASE)).encode()
    elapsed = time.perf_counter() - start
    verdict("7 determinism", a == b and elapsed < 60,
            f"results.jsonl byte-identical across two runs ({len(a)} bytes, {elapsed:.1f} s)")


def test_criterion_8_corner_reductions(benchmark):
    corner = dataclasses.replace(
        BASE,
        rerank=RerankConfig(alpha_min=1.0, alpha_max=1.0, lambda_item=0.0),
        backend=AgentBackendConfig(mock_beta=0.0),
    )
    log = run_simulation(benchmark, corner)
    same = sum(r.stage2 == r.stage1 for r in log.rounds)
    no_item = run_simulation(benchmark, dataclasses.replace(
        BASE, rerank=RerankConfig(ablation=AblationFlags(disable_item_utility=True))))
    flat = run_simulation(benchmark, dataclasses.replace(BASE, rerank=RerankConfig(lambda_item=0.0)))
    equal = sum(x.stage2 == y.stage2 for x, y in zip(no_item.rounds, flat.rounds))
    verdict("8 corner reductions",
            same == len(log.rounds) and equal == len(flat.rounds) == len(no_item.rounds),
            f"Y2 == Y1 in {same}/{len(log.rounds)} rounds; disable_item_utility == lambda_item=0 "
            f"in {equal}/{len(flat.rounds)} rounds")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
