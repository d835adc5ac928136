"""Dataset files, run configuration and result serialization.

Dataset layout (one JSON object per line):

* ``interactions.jsonl``: ``{user_id, item_id, timestamp, weight?}``
* ``items.jsonl``: ``{item_id, title, category, description, training_pop?}``
* ``users.jsonl``: ``{user_id, profile_text}``
* ``embeddings.jsonl``: a header ``{kind: "items"|"users", dim}`` followed by
  ``{id, vector}`` records; a second header starts the other section.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .agents import AgentBackendConfig
from .core import Interaction, ItemRecord, PopularityGroups, UserProfile
from .metrics import MetricReport, aggregate, evaluate_user
from .rerank import AblationFlags, RerankConfig
from .simulator import Dataset, EpisodeLog, SimulationConfig
from .synthetic import SyntheticSpec

DATASET_FILES = {
    "interactions": "interactions.jsonl",
    "items": "items.jsonl",
    "users": "users.jsonl",
    "embeddings": "embeddings.jsonl",
}


class DatasetError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def sig10(x: float) -> float:
    """Round to 10 significant digits for serialization."""
    return float(f"{x:.10g}")


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _records(path: str | os.PathLike) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DatasetError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, rec


def _require_str(rec: dict, name: str, where: str) -> str:
    value = rec.get(name)
    if not isinstance(value, str) or not value:
        raise DatasetError(f"{where}: missing or empty field '{name}'")
    return value


def load_interactions(path) -> list[Interaction]:
    out: list[Interaction] = []
    seen: dict[tuple[str, str, int], int] = {}
    for lineno, rec in _records(path):
        where = f"{path}:{lineno}"
        user_id = _require_str(rec, "user_id", where)
        item_id = _require_str(rec, "item_id", where)
        ts = rec.get("timestamp")
        if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts != int(ts) or ts < 0:
            raise DatasetError(f"{where}: field 'timestamp' must be a non-negative integer")
        weight = rec.get("weight", 1.0)
        if isinstance(weight, bool) or not isinstance(weight, (int, float)) or not weight > 0:
            raise DatasetError(f"{where}: field 'weight' must be a positive number")
        key = (user_id, item_id, int(ts))
        if key in seen:
            raise DatasetError(f"{path}: duplicate interaction {key} on lines {seen[key]} and {lineno}")
        seen[key] = lineno
        out.append(Interaction(user_id, item_id, int(ts), float(weight)))
    return out


def load_items(path) -> dict[str, ItemRecord]:
    items: dict[str, ItemRecord] = {}
    for lineno, rec in _records(path):
        where = f"{path}:{lineno}"
        item_id = _require_str(rec, "item_id", where)
        if item_id in items:
            raise DatasetError(f"{where}: duplicate item_id {item_id!r}")
        pop = rec.get("training_pop", 0)
        if isinstance(pop, bool) or not isinstance(pop, int) or pop < 0:
            raise DatasetError(f"{where}: field 'training_pop' must be a non-negative integer")
        items[item_id] = ItemRecord(
            item_id,
            str(rec.get("title", "")),
            str(rec.get("category", "")),
            str(rec.get("description", "")),
            training_pop=pop,
        )
    return items


def load_users(path) -> dict[str, UserProfile]:
    users: dict[str, UserProfile] = {}
    for lineno, rec in _records(path):
        where = f"{path}:{lineno}"
        user_id = _require_str(rec, "user_id", where)
        if user_id in users:
            raise DatasetError(f"{where}: duplicate user_id {user_id!r}")
        users[user_id] = UserProfile(user_id, str(rec.get("profile_text", "")))
    return users


def load_embeddings(path) -> dict[str, dict[str, np.ndarray]]:
    """Return ``{kind: {id: vector}}``; every section must share one dimension."""
    sections: dict[str, dict[str, np.ndarray]] = {}
    kind = None
    dim = None
    for lineno, rec in _records(path):
        where = f"{path}:{lineno}"
        if "kind" in rec:
            kind = rec["kind"]
            if kind not in ("items", "users"):
                raise DatasetError(f"{where}: header kind must be 'items' or 'users'")
            if kind in sections:
                raise DatasetError(f"{where}: second header for kind {kind!r}")
            d = rec.get("dim")
            if isinstance(d, bool) or not isinstance(d, int) or d < 1:
                raise DatasetError(f"{where}: header 'dim' must be a positive integer")
            if dim is not None and d != dim:
                raise DatasetError(f"{where}: mixed embedding dimensions {dim} and {d}")
            dim = d
            sections[kind] = {}
            continue
        if kind is None:
            raise DatasetError(f"{where}: embeddings file must start with a header record")
        eid = _require_str(rec, "id", where)
        vec = rec.get("vector")
        if not isinstance(vec, list):
            raise DatasetError(f"{where}: missing field 'vector'")
        if len(vec) != dim:
            raise DatasetError(f"{where}: vector for {eid!r} has length {len(vec)}, header says {dim}")
        try:
            arr = np.array(vec, dtype=float)
        except (TypeError, ValueError):
            raise DatasetError(f"{where}: non-numeric value in vector for {eid!r}") from None
        if not np.all(np.isfinite(arr)):
            raise DatasetError(f"{where}: non-finite value in vector for {eid!r}")
        if eid in sections[kind]:
            raise DatasetError(f"{where}: duplicate embedding id {eid!r}")
        sections[kind][eid] = arr
    return sections


def attach_embeddings(items, users, embeddings) -> tuple[dict[str, ItemRecord], dict[str, UserProfile]]:
    item_vecs = embeddings.get("items", {})
    user_vecs = embeddings.get("users", {})
    missing = [f"item {i}" for i in items if i not in item_vecs]
    missing += [f"user {u}" for u in users if u not in user_vecs]
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise DatasetError(f"{len(missing)} id(s) without an embedding: {shown}")
    zero = [k for k, v in {**item_vecs, **user_vecs}.items() if not np.any(v)]
    if zero:
        raise DatasetError(f"all-zero embedding for: {', '.join(zero[:20])}")
    items = {k: dataclasses.replace(r, embedding=item_vecs[k]) for k, r in items.items()}
    users = {k: dataclasses.replace(u, embedding=user_vecs[k]) for k, u in users.items()}
    return items, users


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    for name in DATASET_FILES.values():
        if not (d / name).exists():
            raise DatasetError(f"missing dataset file {d / name}")
    items = load_items(d / DATASET_FILES["items"])
    users = load_users(d / DATASET_FILES["users"])
    items, users = attach_embeddings(items, users, load_embeddings(d / DATASET_FILES["embeddings"]))
    interactions = load_interactions(d / DATASET_FILES["interactions"])
    unknown = sorted({it.item_id for it in interactions if it.item_id not in items})
    unknown_u = sorted({it.user_id for it in interactions if it.user_id not in users})
    if unknown or unknown_u:
        raise DatasetError(
            f"interactions reference unknown items {unknown[:10]} / users {unknown_u[:10]}")
    return Dataset(items, users, interactions)


def _jsonl(records: Iterable[Mapping]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def dataset_texts(ds: Dataset) -> dict[str, str]:
    dim = len(next(iter(ds.items.values())).embedding)
    emb = [{"kind": "items", "dim": dim}]
    emb += [{"id": k, "vector": [float(x) for x in r.embedding]} for k, r in ds.items.items()]
    emb.append({"kind": "users", "dim": dim})
    emb += [{"id": k, "vector": [float(x) for x in u.embedding]} for k, u in ds.users.items()]
    return {
        "interactions": _jsonl(
            {"user_id": i.user_id, "item_id": i.item_id, "timestamp": i.timestamp, "weight": i.weight}
            for i in ds.interactions),
        "items": _jsonl(
            {"item_id": r.item_id, "title": r.title, "category": r.category,
             "description": r.description, "training_pop": r.training_pop}
            for r in ds.items.values()),
        "users": _jsonl({"user_id": u.user_id, "profile_text": u.profile_text} for u in ds.users.values()),
        "embeddings": _jsonl(emb),
    }


def save_dataset(ds: Dataset, directory) -> list[Path]:
    d = Path(directory)
    paths = []
    for key, text in dataset_texts(ds).items():
        path = d / DATASET_FILES[key]
        atomic_write_text(path, text)
        paths.append(path)
    return paths


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- configuration

def _build(cls, values: Mapping[str, Any], section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from None


def config_from_dict(raw: Mapping[str, Any]) -> tuple[SimulationConfig, dict]:
    """Build a SimulationConfig from ``{simulation, rerank, backend, data}`` sections.

    Returns the config and the ``data`` section (``{"dir": ...}`` or
    ``{"synthetic": {...}}``; empty means the default synthetic benchmark).
    """
    unknown = set(raw) - {"simulation", "rerank", "backend", "data"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    if "api_key" in str(raw.get("backend", {})).lower():
        raise ConfigError("API keys are read from TRIREC_LLM_API_KEY, never from config files")
    rerank_raw = dict(raw.get("rerank", {}))
    ablation = _build(AblationFlags, rerank_raw.pop("ablation", {}), "rerank.ablation")
    rerank = _build(RerankConfig, {**rerank_raw, "ablation": ablation}, "rerank")
    backend = _build(AgentBackendConfig, raw.get("backend", {}), "backend")
    sim_raw = dict(raw.get("simulation", {}))
    for key in ("rerank", "backend"):
        if key in sim_raw:
            raise ConfigError(f"[{key}] is a top-level section, not part of [simulation]")
    cfg = _build(SimulationConfig, {**sim_raw, "rerank": rerank, "backend": backend}, "simulation")
    data = dict(raw.get("data", {}))
    if "synthetic" in data:
        _build(SyntheticSpec, data["synthetic"], "data.synthetic")
    return cfg, data


def load_config(path) -> tuple[SimulationConfig, dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(raw)


def config_to_dict(cfg: SimulationConfig, data: Mapping | None = None) -> dict:
    sim = dataclasses.asdict(cfg)
    rerank = sim.pop("rerank")
    backend = sim.pop("backend")
    sim["metric_ks"] = list(sim["metric_ks"])
    sim["fairness_ks"] = list(sim["fairness_ks"])
    out = {"simulation": sim, "rerank": rerank, "backend": backend}
    if data:
        out["data"] = dict(data)
    return out


# ---------------------------------------------------------------- results

def round_record(rec) -> dict:
    ev = rec.evaluation
    out = {
        "t": rec.t,
        "user_id": rec.user_id,
        "ground_truth": rec.ground_truth,
        "candidates": rec.candidates,
        "stage1": rec.stage1,
        "stage1_scores": {k: sig10(v) for k, v in rec.stage1_scores.items()},
        "stage1_fallback": rec.stage1_fallback,
        "stage2": rec.stage2,
        "breakdowns": [
            {k: (sig10(v) if isinstance(v, float) else v) for k, v in dataclasses.asdict(b).items()}
            for b in rec.breakdowns
        ],
        "exposure_delta": {k: sig10(v) for k, v in rec.exposure_delta.items()},
        "ctr": {k: sig10(v) for k, v in rec.ctr.items()},
        "metrics": {
            "ndcg": {str(k): sig10(v) for k, v in ev.ndcg_at.items()},
            "mrr": sig10(ev.mrr),
            "eiu_target": sig10(ev.eiu_target),
            "eiu_cumulative": sig10(ev.eiu_cumulative),
        },
    }
    return out


def results_jsonl(log: EpisodeLog) -> str:
    return _jsonl(round_record(r) for r in log.rounds)


def metrics_csv(report: MetricReport) -> str:
    lines = ["metric,k,value"]
    for metric, k, value in report.rows():
        lines.append(f"{metric},{'' if k is None else k},{value:.10g}")
    return "\n".join(lines) + "\n"


def read_metrics_csv(path) -> MetricReport:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(r["metric"], int(r["k"]) if r["k"] else None, float(r["value"]))
                for r in csv.DictReader(fh)]
    return MetricReport.from_rows(rows)


def groups_json(log: EpisodeLog) -> str:
    g = log.groups
    return json.dumps({
        "G": g.G,
        "historical_share": [float(x) for x in g.historical_share],
        "group_of": dict(sorted(g.group_of.items())),
        "exposure_weighting": log.config.exposure_weighting,
        "fairness_ks": list(log.config.fairness_ks),
    }, indent=1) + "\n"


def write_run(log: EpisodeLog, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {"results": out / "results.jsonl", "groups": out / "groups.json"}
    atomic_write_text(paths["results"], results_jsonl(log))
    atomic_write_text(paths["groups"], groups_json(log))
    if log.report is not None:
        paths["metrics"] = out / "metrics.csv"
        atomic_write_text(paths["metrics"], metrics_csv(log.report))
    return paths


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=True, default=str) + "\n")


def report_from_results(results_path, groups_path) -> MetricReport:
    """Recompute a MetricReport from a run's results.jsonl and groups.json."""
    with open(groups_path, encoding="utf-8") as fh:
        graw = json.load(fh)
    groups = PopularityGroups(graw["group_of"], graw["G"], np.array(graw["historical_share"]))
    evals, served, joint = [], [], []
    for lineno, rec in _records(results_path):
        ks = [int(k) for k in rec["metrics"]["ndcg"]]
        evals.append(evaluate_user(rec["user_id"], rec["stage2"], rec["ground_truth"],
                                   rec["ctr"].__getitem__, ks))
        served.append(rec["stage2"])
        joint.extend(b["u_joint"] for b in rec["breakdowns"])
    if not evals:
        raise DatasetError(f"{results_path} holds no rounds")
    return aggregate(evals, served, groups, graw["fairness_ks"], math.fsum(joint),
                     graw["exposure_weighting"])
