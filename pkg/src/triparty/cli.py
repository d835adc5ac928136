"""Command-line entry point.

Subcommands: run, ablate, sweep, metrics, gen-synthetic. Exit status is 0 on
success, 1 for invalid input (flags, config, dataset files) and 2 for runtime
failures. Every run/ablate/sweep output directory gets a manifest.json, also
when the command fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    DATASET_FILES,
    ConfigError,
    DatasetError,
    atomic_write_text,
    config_to_dict,
    file_digest,
    load_config,
    load_dataset,
    metrics_csv,
    report_from_results,
    save_dataset,
    write_json,
    write_run,
)
from .metrics import group_exposure_shares
from .plots import plot_ablation, plot_group_exposure, plot_sweep
from .simulator import (
    VARIANTS,
    Dataset,
    SimulationConfig,
    run_ablation,
    run_simulation,
    sweep_alpha_max,
)
from .synthetic import SyntheticSpec, generate_synthetic_dataset

logger = logging.getLogger("triparty")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


RERANK_FLAGS = {
    "alpha_min": float, "alpha_max": float, "p": float, "lambda1": float,
    "lambda2": float, "lambda_item": float, "K": int,
}
SIM_FLAGS = {"seed": int, "n_candidates": int, "rounds": int, "user_order": str}
BACKEND_FLAGS = {"backend": str, "mock_beta": float}


def parse_grid(spec: str) -> list[float]:
    """``lo:hi:step`` with both ends included, e.g. ``0.1:1.0:0.05``."""
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise UsageError(f"grid must look like lo:hi:step, got {spec!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError(f"grid needs step > 0 and hi >= lo, got {spec!r}")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 10) for i in range(n + 1)]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config with simulation/rerank/backend/data sections")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--data", help="dataset directory (overrides the config's data section)")
    for name, typ in {**SIM_FLAGS, **RERANK_FLAGS, **BACKEND_FLAGS}.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="triparty", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one configuration")
    _add_common(p)

    p = sub.add_parser("ablate", help="full model vs one ablation variant on paired seeds")
    _add_common(p)
    p.add_argument("--variant", required=True, choices=sorted(VARIANTS))
    p.add_argument("--static-alpha", type=float, default=0.1)

    p = sub.add_parser("sweep", help="sweep alpha_max over a grid")
    _add_common(p)
    p.add_argument("--param", default="alpha_max", choices=["alpha_max"])
    p.add_argument("--grid", default="0.1:1.0:0.05")

    p = sub.add_parser("metrics", help="recompute metrics.csv from a run directory")
    p.add_argument("--in", dest="in_dir", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=400)
    p.add_argument("--skew", type=float, default=1.2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--out", required=True)
    return parser


def _apply_overrides(cfg: SimulationConfig, args) -> SimulationConfig:
    def pick(names):
        return {k: getattr(args, k) for k in names if getattr(args, k, None) is not None}
    try:
        rerank = dataclasses.replace(cfg.rerank, **pick(RERANK_FLAGS))
        backend = dataclasses.replace(cfg.backend, **pick(BACKEND_FLAGS))
        return dataclasses.replace(cfg, rerank=rerank, backend=backend, **pick(SIM_FLAGS))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_inputs(args, out: Path):
    if args.config:
        cfg, data = load_config(args.config)
    else:
        cfg, data = SimulationConfig(), {}
    cfg = _apply_overrides(cfg, args)
    if args.data:
        data = {"dir": args.data}
    if "dir" in data:
        d = Path(data["dir"])
        dataset = load_dataset(d)
        files = [d / name for name in DATASET_FILES.values()]
    else:
        spec = SyntheticSpec(**data.get("synthetic", {}))
        items, users, inter = generate_synthetic_dataset(spec)
        dataset = Dataset(items, users, inter)
        files = save_dataset(dataset, out / "dataset")
        data = {"dir": str(out / "dataset"), "synthetic": dataclasses.asdict(spec)}
    digests = {str(f): file_digest(f) for f in files}
    return cfg, data, dataset, digests


def _write_single(log, out: Path) -> dict:
    paths = write_run(log, out)
    if log.report is not None:
        p = group_exposure_shares([r.stage2 for r in log.rounds], log.groups,
                                  max(log.config.fairness_ks), log.config.exposure_weighting)
        paths["exposure_figure"] = plot_group_exposure(
            p, log.groups.historical_share, out / "exposure.png",
            title=f"top-{max(log.config.fairness_ks)} exposure by popularity group")
    return {k: str(v) for k, v in paths.items()}


def _report_table(report) -> str:
    return "\n".join(f"{m:>15} {'' if k is None else k:>3} {v:.6f}" for m, k, v in report.rows())


def cmd_run(args, out, cfg, dataset):
    log = run_simulation(dataset, cfg)
    outputs = _write_single(log, out)
    if log.report is not None:
        print(_report_table(log.report))
    return outputs


def cmd_ablate(args, out, cfg, dataset):
    full, variant = run_ablation(dataset, cfg, args.variant, args.static_alpha)
    name = f"variant_{args.variant}"
    outputs = {f"full.{k}": v for k, v in _write_single(full, out / "full").items()}
    outputs.update({f"{name}.{k}": v for k, v in _write_single(variant, out / name).items()})
    if full.report is None or variant.report is None:
        raise ValueError("no rounds were simulated; nothing to compare")
    lines = ["metric,k,full,variant"]
    for (m, k, a), (_, _, b) in zip(full.report.rows(), variant.report.rows()):
        lines.append(f"{m},{'' if k is None else k},{a:.10g},{b:.10g}")
    atomic_write_text(out / "ablation.csv", "\n".join(lines) + "\n")
    label = f"({args.variant}) {VARIANTS[args.variant]}"
    plot_ablation({"full": full.report, label: variant.report}, out / "ablation.png")
    outputs.update({"ablation": str(out / "ablation.csv"), "ablation_figure": str(out / "ablation.png")})
    print("\n".join(lines))
    return outputs


def cmd_sweep(args, out, cfg, dataset):
    grid = parse_grid(args.grid)
    rows = sweep_alpha_max(dataset, cfg, grid)
    if any(r is None for _, r in rows):
        raise ValueError("no rounds were simulated; nothing to sweep")
    header = ["alpha_max"]
    first = rows[0][1].rows()
    header += [m if k is None else f"{m}@{k}" for m, k, _ in first]
    lines = [",".join(header)]
    for a, rep in rows:
        lines.append(",".join([f"{a:.10g}"] + [f"{v:.10g}" for _, _, v in rep.rows()]))
    atomic_write_text(out / "sweep.csv", "\n".join(lines) + "\n")
    plot_sweep(rows, out / "sweep.png")
    print("\n".join(lines))
    return {"sweep": str(out / "sweep.csv"), "sweep_figure": str(out / "sweep.png")}


def cmd_metrics(args):
    d = Path(args.in_dir)
    for name in ("results.jsonl", "groups.json"):
        if not (d / name).exists():
            raise DatasetError(f"{d / name} not found")
    report = report_from_results(d / "results.jsonl", d / "groups.json")
    atomic_write_text(d / "metrics.csv", metrics_csv(report))
    print(_report_table(report))


def cmd_gen_synthetic(args):
    spec = SyntheticSpec(n_users=args.users, n_items=args.items, skew=args.skew, seed=args.seed, dim=args.dim)
    items, users, inter = generate_synthetic_dataset(spec)
    for path in save_dataset(Dataset(items, users, inter), args.out):
        print(path)


RUNNERS = {"run": cmd_run, "ablate": cmd_ablate, "sweep": cmd_sweep}


def _run_with_manifest(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "command": args.command,
        "argv": sys.argv[1:],
        "version": __version__,
        "config": None,
        "dataset_digests": {},
        "outputs": {},
        "error": None,
    }
    start = time.perf_counter()
    try:
        cfg, data, dataset, digests = _load_inputs(args, out)
        manifest["config"] = config_to_dict(cfg, data)
        manifest["dataset_digests"] = digests
        if args.command == "ablate":
            manifest["variant"] = args.variant
            manifest["static_alpha"] = args.static_alpha
        if args.command == "sweep":
            manifest["grid"] = parse_grid(args.grid)
        write_json(out / "manifest.json", manifest)
        manifest["outputs"] = RUNNERS[args.command](args, out, cfg, dataset)
    except BaseException as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest["duration_s"] = round(time.perf_counter() - start, 3)
        write_json(out / "manifest.json", manifest)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in RUNNERS:
            _run_with_manifest(args)
        elif args.command == "metrics":
            cmd_metrics(args)
        else:
            cmd_gen_synthetic(args)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        logger.exception("run failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
