"""One Monte Carlo iteration: wire nodes, gateway and (for ACRDA) the window process, then run to the horizon.

Stream layout: the iteration seed is derived from (master_seed, nodes_sim, iteration) and every
node draws from its own stream derived from (iteration seed, node_id). Scenarios are keyed by
their node count, so adding or removing a sweep entry never shifts another scenario's draws.

Usage:
    from scripts.simulation import run_iteration
    result = run_iteration(cfg, nodes_sim=125, iteration=0)
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, List, Optional, Tuple

from .acrda import AcrdaGateway, window_routine
from .core import Gateway, Node, write_fragment_trace
from .engine import MASK64, Engine, derive_stream, mix64
from .metrics import RunMetrics
from .settings import ScenarioConfig

logger = logging.getLogger(__name__)

RECEIVERS = ("baseline", "acrda")


def run_seed(master_seed: int, nodes_sim: int, iteration: int) -> int:
    return mix64((master_seed ^ mix64(((nodes_sim << 32) | iteration) & MASK64)) & MASK64)


def scenario_id(nodes_sim: int) -> str:
    return f"n{nodes_sim}"


@dataclass
class Network:
    engine: Engine
    gateway: Gateway
    nodes: List[Node]
    seed: int


def build_network(
    cfg: ScenarioConfig,
    nodes_sim: int,
    iteration: int,
    receiver: Optional[str] = None,
    record_trace: bool = False,
    record_events: bool = False,
) -> Network:
    receiver = receiver or cfg.receiver
    if receiver not in RECEIVERS:
        raise ValueError(f"unknown receiver {receiver!r}; expected one of {RECEIVERS}")
    seed = run_seed(cfg.master_seed, nodes_sim, iteration)
    region = cfg.region()
    params = cfg.transmission()
    engine = Engine(record_trace=record_events)
    if receiver == "acrda":
        gateway: Gateway = AcrdaGateway(region, params, cfg.acrda_params(), record_trace=record_trace)
    else:
        gateway = Gateway(region, record_trace=record_trace)
    nodes = []
    for node_id in range(nodes_sim):
        node = Node(
            node_id=node_id,
            traffic=cfg.traffic_model(),
            rng=derive_stream(seed, node_id),
            params=params,
            region=region,
            anchor=cfg.interval_anchor,
        )
        gateway.register(node)
        engine.process(node.transmit(engine, gateway))
        nodes.append(node)
    if isinstance(gateway, AcrdaGateway):
        engine.process(window_routine(engine, gateway))
    return Network(engine=engine, gateway=gateway, nodes=nodes, seed=seed)


@dataclass(frozen=True)
class IterationResult:
    scenario_id: str
    nodes_sim: int
    iteration: int
    receiver: str
    seed: int
    metrics: RunMetrics
    decoded: FrozenSet[int]
    event_count: int
    elapsed_s: float
    trace_path: Optional[str] = None
    events: Optional[Tuple[Tuple[int, int, str], ...]] = None


def trace_path_for(output: str, sid: str, iteration: int) -> Path:
    out = Path(output)
    return out.with_name(f"{out.stem}_trace") / f"{sid}_it{iteration}.csv"


def run_iteration(
    cfg: ScenarioConfig,
    nodes_sim: int,
    iteration: int,
    receiver: Optional[str] = None,
    trace_dir: Optional[str] = None,
    record_events: bool = False,
) -> IterationResult:
    """Run one iteration to ``cfg.sim_time``; with ``trace_dir`` the fragment log is written there."""
    started = time.perf_counter()
    receiver = receiver or cfg.receiver
    want_trace = trace_dir is not None or cfg.trace
    net = build_network(cfg, nodes_sim, iteration, receiver, record_trace=want_trace, record_events=record_events)
    fired = net.engine.run_until(cfg.sim_ticks)
    net.gateway.close(net.engine.now)
    metrics = RunMetrics.from_gateway(iteration, net.gateway, cfg.sim_time)
    sid = scenario_id(nodes_sim)
    path: Optional[str] = None
    if want_trace and net.gateway.trace is not None:
        target = Path(trace_dir) / f"{sid}_it{iteration}.csv" if trace_dir else trace_path_for(cfg.output, sid, iteration)
        write_fragment_trace(net.gateway.trace, target)
        path = str(target)
    elapsed = time.perf_counter() - started
    logger.debug("iteration %s/%s fired=%s elapsed=%.2fs", sid, iteration, fired, elapsed)
    return IterationResult(
        scenario_id=sid,
        nodes_sim=nodes_sim,
        iteration=iteration,
        receiver=receiver,
        seed=net.seed,
        metrics=metrics,
        decoded=frozenset(net.gateway.decoded),
        event_count=net.engine.fired,
        elapsed_s=elapsed,
        trace_path=path,
        events=tuple(net.engine.trace) if net.engine.trace is not None else None,
    )
