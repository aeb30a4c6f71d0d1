"""Reported quantities: network success, throughput, per-node success CDF and cross-iteration aggregates.

Usage:
    run = RunMetrics.from_gateway(iteration, gateway, sim_time)
    agg = aggregate([run, ...], n_sim=125, grid_multiplier=8)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, List, Optional, Sequence, Tuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .core import Gateway


@dataclass(frozen=True)
class NodeTally:
    node_id: int
    transmitted: int
    succeeded: int

    @property
    def success_rate(self) -> Optional[float]:
        return self.succeeded / self.transmitted if self.transmitted else None


@dataclass(frozen=True)
class RunMetrics:
    iteration: int
    transmitted: int
    succeeded: int
    sim_time: float  # seconds
    per_node: Tuple[NodeTally, ...] = ()

    def __post_init__(self) -> None:
        if self.succeeded > self.transmitted:
            raise ValueError(f"succeeded {self.succeeded} > transmitted {self.transmitted}")
        if self.per_node:
            if sum(n.transmitted for n in self.per_node) != self.transmitted:
                raise ValueError("per-node transmitted does not add up")
            if sum(n.succeeded for n in self.per_node) != self.succeeded:
                raise ValueError("per-node succeeded does not add up")

    @classmethod
    def from_tallies(cls, iteration: int, sim_time: float, tallies: Iterable[NodeTally]) -> "RunMetrics":
        nodes = tuple(sorted(tallies, key=lambda n: n.node_id))
        return cls(
            iteration=iteration,
            transmitted=sum(n.transmitted for n in nodes),
            succeeded=sum(n.succeeded for n in nodes),
            sim_time=sim_time,
            per_node=nodes,
        )

    @classmethod
    def from_gateway(cls, iteration: int, gateway: "Gateway", sim_time: float) -> "RunMetrics":
        tallies = (NodeTally(node_id, s.transmitted, s.succeeded) for node_id, s in gateway.per_node.items())
        return cls.from_tallies(iteration, sim_time, tallies)


def network_success(run: RunMetrics) -> Optional[float]:
    """succeeded / transmitted; None when nothing was transmitted."""
    if run.transmitted == 0:
        return None
    return run.succeeded / run.transmitted


def throughput(run: RunMetrics) -> float:
    """Offered load in packets per second."""
    if run.sim_time <= 0:
        raise ValueError(f"sim_time must be > 0, got {run.sim_time}")
    return run.transmitted / run.sim_time


def goodput(run: RunMetrics) -> float:
    if run.sim_time <= 0:
        raise ValueError(f"sim_time must be > 0, got {run.sim_time}")
    return run.succeeded / run.sim_time


def node_success_samples(runs: Iterable[RunMetrics]) -> List[float]:
    # nodes that never transmitted carry no information
    return [n.success_rate for run in runs for n in run.per_node if n.transmitted > 0]


def node_success_cdf(runs: Iterable[RunMetrics]) -> List[Tuple[float, float]]:
    """Pooled per-node success ratios, sorted, each with its empirical CDF value i/n."""
    samples = sorted(node_success_samples(runs))
    n = len(samples)
    return [(value, (i + 1) / n) for i, value in enumerate(samples)]


def node_success_variance(runs: Iterable[RunMetrics]) -> float:
    samples = node_success_samples(runs)
    if len(samples) < 2:
        return 0.0
    return float(np.var(samples, ddof=1))


@dataclass(frozen=True)
class Aggregate:
    iterations: int
    n_sim: int
    n_reported: int
    mean_success: Optional[float]  # mean of per-iteration ratios
    success_stddev: float
    pooled_success: Optional[float]  # sum succeeded / sum transmitted
    mean_throughput_pps: float
    mean_goodput_pps: float
    cdf_samples: Tuple[float, ...] = field(default=(), repr=False)

    @property
    def cdf_mean(self) -> Optional[float]:
        return float(np.mean(self.cdf_samples)) if self.cdf_samples else None


def _sample_std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def aggregate(runs: Sequence[RunMetrics], n_sim: int, grid_multiplier: int = 8) -> Aggregate:
    if not runs:
        raise ValueError("aggregate needs at least one run")
    ratios = [r for r in (network_success(run) for run in runs) if r is not None]
    total_tx = sum(run.transmitted for run in runs)
    total_ok = sum(run.succeeded for run in runs)
    return Aggregate(
        iterations=len(runs),
        n_sim=n_sim,
        n_reported=grid_multiplier * n_sim,
        mean_success=float(np.mean(ratios)) if ratios else None,
        success_stddev=_sample_std(ratios),
        pooled_success=total_ok / total_tx if total_tx else None,
        mean_throughput_pps=float(np.mean([throughput(run) for run in runs])),
        mean_goodput_pps=float(np.mean([goodput(run) for run in runs])),
        cdf_samples=tuple(sorted(node_success_samples(runs))),
    )
