"""Batch front-end: run LR-FHSS iteration campaigns and write plot-ready results.

Examples:
    python -m scripts.cli --config samples/configs/smoke.conf
    python -m scripts.cli --nodes 125,250,500 --iterations 20 --receiver acrda --workers 4
    python -m scripts.cli --traffic markov2 --per-node --output out/fig3.csv

Exit codes: 0 ok, 2 invalid configuration, 3 I/O error, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence

from dotenv import load_dotenv

from . import logs
from .core import ParameterError
from .metrics import aggregate, goodput, network_success, node_success_cdf, throughput
from .schemas import (
    CDF_FIELDS,
    NODE_FIELDS,
    ROW_FIELDS,
    SUMMARY_FIELDS,
    CampaignDocument,
    CdfPoint,
    NodeRow,
    ResultRow,
    ScenarioSummary,
)
from .settings import ENV_LOG_LEVEL, ConfigError, ScenarioConfig, env_defaults, parse_config, read_config
from .simulation import IterationResult, run_iteration, trace_path_for
from .traffic import TrafficError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
DECIMALS = 6


class Task(NamedTuple):
    cfg: ScenarioConfig
    nodes_sim: int
    iteration: int
    trace_dir: Optional[str]


def _run_task(task: Task) -> IterationResult:
    # top level so the process pool can pickle it
    return run_iteration(task.cfg, task.nodes_sim, task.iteration, trace_dir=task.trace_dir)


@dataclass
class CampaignResult:
    rows: List[ResultRow]
    runs: Dict[str, List[IterationResult]]
    aggregates: Dict[str, ScenarioSummary]
    elapsed_s: float = 0.0
    nodes: List[NodeRow] = field(default_factory=list)
    cdf: List[CdfPoint] = field(default_factory=list)


def result_row(cfg: ScenarioConfig, result: IterationResult) -> ResultRow:
    run = result.metrics
    return ResultRow(
        scenario_id=result.scenario_id,
        iteration=result.iteration,
        receiver=result.receiver,
        traffic=cfg.traffic,
        n_sim=result.nodes_sim,
        n_reported=cfg.grid_multiplier * result.nodes_sim,
        transmitted=run.transmitted,
        succeeded=run.succeeded,
        success_rate=network_success(run),
        throughput_pps=throughput(run),
        goodput_pps=goodput(run),
        master_seed=cfg.master_seed,
    )


def summarize(cfg: ScenarioConfig, sid: str, results: Sequence[IterationResult]) -> ScenarioSummary:
    n_sim = results[0].nodes_sim
    agg = aggregate([r.metrics for r in results], n_sim=n_sim, grid_multiplier=cfg.grid_multiplier)
    return ScenarioSummary(
        scenario_id=sid,
        receiver=results[0].receiver,
        traffic=cfg.traffic,
        n_sim=n_sim,
        n_reported=agg.n_reported,
        iterations=agg.iterations,
        mean_success=agg.mean_success,
        success_stddev=agg.success_stddev,
        pooled_success=agg.pooled_success,
        mean_throughput_pps=agg.mean_throughput_pps,
        mean_goodput_pps=agg.mean_goodput_pps,
        cdf_mean=agg.cdf_mean,
    )


def node_rows(results: Iterable[IterationResult]) -> List[NodeRow]:
    return [
        NodeRow(
            scenario_id=r.scenario_id,
            iteration=r.iteration,
            node_id=n.node_id,
            transmitted=n.transmitted,
            succeeded=n.succeeded,
            success_rate=n.success_rate,
        )
        for r in results
        for n in r.metrics.per_node
    ]


def plan_tasks(cfg: ScenarioConfig) -> List[Task]:
    trace_dir = str(trace_path_for(cfg.output, "x", 0).parent) if cfg.trace else None
    return [
        Task(cfg, scenario.nodes_sim, iteration, trace_dir)
        for scenario in cfg.scenarios()
        for iteration in range(cfg.iterations)
    ]


def run_campaign(cfg: ScenarioConfig, workers: Optional[int] = None) -> CampaignResult:
    """Run every (scenario, iteration) pair; output order never depends on ``workers``."""
    workers = workers or cfg.workers
    tasks = plan_tasks(cfg)
    started = time.perf_counter()
    logs.log_event(
        "campaign.start",
        scenarios=[s.scenario_id for s in cfg.scenarios()],
        iterations=cfg.iterations,
        workers=workers,
        receiver=cfg.receiver,
        traffic=cfg.traffic,
        master_seed=cfg.master_seed,
    )
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        results = [_run_task(t) for t in tasks]

    order = {n: i for i, n in enumerate(cfg.nodes_sim)}
    results.sort(key=lambda r: (order[r.nodes_sim], r.iteration))
    runs: Dict[str, List[IterationResult]] = {}
    for r in results:
        runs.setdefault(r.scenario_id, []).append(r)
        logs.log_event(
            "iteration.done",
            scenario_id=r.scenario_id,
            iteration=r.iteration,
            transmitted=r.metrics.transmitted,
            succeeded=r.metrics.succeeded,
            elapsed_s=round(r.elapsed_s, 3),
        )

    outcome = CampaignResult(
        rows=[result_row(cfg, r) for r in results],
        runs=runs,
        aggregates={sid: summarize(cfg, sid, rs) for sid, rs in runs.items()},
    )
    if cfg.per_node:
        outcome.nodes = node_rows(results)
        outcome.cdf = [
            CdfPoint(scenario_id=sid, success=value, cdf=level)
            for sid, rs in runs.items()
            for value, level in node_success_cdf(r.metrics for r in rs)
        ]
    outcome.elapsed_s = time.perf_counter() - started
    logs.log_event("campaign.done", rows=len(outcome.rows), elapsed_s=round(outcome.elapsed_s, 3))
    return outcome


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{DECIMALS}f}"
    return str(value)


def _round(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, DECIMALS)
    if isinstance(value, dict):
        return {k: _round(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_round(v) for v in value]
    return value


def companion_path(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


def _write_csv(path: Path, header: Sequence[str], records: Iterable[Any]) -> int:
    count = 0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for rec in records:
                writer.writerow([_cell(getattr(rec, name)) for name in header])
                count += 1
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return count


def emit(
    rows: Sequence[ResultRow],
    aggregates: Dict[str, ScenarioSummary],
    fmt: str,
    path: Any,
    nodes: Optional[Sequence[NodeRow]] = None,
    cdf: Optional[Sequence[CdfPoint]] = None,
) -> List[Path]:
    """Write results; returns the files written. CSV mode adds ``_summary``/``_nodes``/``_cdf`` companions."""
    out = Path(path)
    written: List[Path] = []
    if fmt == "csv":
        _write_csv(out, ROW_FIELDS, rows)
        written.append(out)
        if aggregates:
            target = companion_path(out, "summary")
            _write_csv(target, SUMMARY_FIELDS, aggregates.values())
            written.append(target)
        if nodes is not None:
            target = companion_path(out, "nodes")
            _write_csv(target, NODE_FIELDS, nodes)
            written.append(target)
        if cdf is not None:
            target = companion_path(out, "cdf")
            _write_csv(target, CDF_FIELDS, cdf)
            written.append(target)
    elif fmt == "json":
        doc = CampaignDocument(rows=list(rows), aggregates=dict(aggregates), nodes=list(nodes) if nodes is not None else None)
        payload = _round(doc.model_dump(exclude_none=False))
        if nodes is None:
            payload.pop("nodes", None)
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc
        written.append(out)
    else:
        raise ValueError(f"unknown output format {fmt!r}; expected csv or json")
    for p in written:
        logs.log_event("output.written", path=str(p))
    return written


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrfhss", description="LR-FHSS network simulation campaigns")
    ap.add_argument("--config", help="Scenario file (key = value lines)")
    ap.add_argument("--nodes", help="Simulated node count, or a comma-separated sweep")
    ap.add_argument("--iterations", type=int)
    ap.add_argument("--sim-time", type=float, help="Horizon per iteration in seconds")
    ap.add_argument("--mean-interval", type=float, help="Average interval between transmissions in seconds")
    ap.add_argument("--traffic", help="exponential | uniform | constant_drift | markov2")
    ap.add_argument("--receiver", help="baseline | acrda")
    ap.add_argument("--anchor", help="Measure intervals from the previous transmission's end or start")
    ap.add_argument("--seed", help="Master seed (unsigned 64-bit, decimal or 0x hex)")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--per-node", action="store_true", default=None, help="Also write per-node rows and CDF points")
    ap.add_argument("--trace", action="store_true", default=None, help="Write the fragment log of every iteration")
    ap.add_argument("--output")
    ap.add_argument("--format", choices=["csv", "json"])
    ap.add_argument("--log-level", help="DEBUG, INFO, WARNING (default from LRFHSS_LOG_LEVEL or INFO)")
    return ap


def overrides_from(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "nodes_sim": args.nodes,
        "iterations": args.iterations,
        "sim_time": args.sim_time,
        "mean_interval": args.mean_interval,
        "traffic": args.traffic,
        "receiver": args.receiver,
        "interval_anchor": args.anchor,
        "master_seed": args.seed,
        "workers": args.workers,
        "per_node": args.per_node,
        "trace": args.trace,
        "output": args.output,
        "format": args.format,
    }


def load_campaign_config(args: argparse.Namespace) -> ScenarioConfig:
    base = env_defaults()
    overrides = overrides_from(args)
    if args.config:
        return read_config(args.config, overrides=overrides, base=base)
    return parse_config("", overrides=overrides, base=base)


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        logs.configure(args.log_level or os.getenv(ENV_LOG_LEVEL) or "INFO")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_campaign_config(args)
    except (ConfigError, TrafficError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        result = run_campaign(cfg)
        emit(
            result.rows,
            result.aggregates,
            cfg.format,
            cfg.output,
            nodes=result.nodes if cfg.per_node else None,
            cdf=result.cdf if cfg.per_node and cfg.format == "csv" else None,
        )
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        logger.exception("campaign failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
