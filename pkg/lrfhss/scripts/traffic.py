"""Inter-arrival generators for end devices.

Four models, all with long-run mean interval ``T`` seconds:

- ``exponential``: -T * ln(U), U on (0, 1] (Poisson arrivals)
- ``uniform``: U * 2T, support (0, 2T)
- ``constant_drift``: max(0, T + sigma * Z), Z standard normal, sigma defaults to T/100; the
  first interval is U * T so devices start out of phase
- ``markov2``: two-state chain, State 1 transmits. Each step lasts S_M = T * pi1. The gap
  between transmitting steps is 1 with probability 1 - q, otherwise 1 + K with
  K ~ Geometric(1 - p), drawn in closed form.
"""
from __future__ import annotations

import abc
import logging
import math
from typing import Callable, Dict, Optional

import numpy as np

from .engine import RandomStream

logger = logging.getLogger(__name__)

DEFAULT_MARKOV_P = 0.99998
DEFAULT_MARKOV_Q = 0.15


class TrafficError(ValueError):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


def markov_steady_state(p: float, q: float) -> float:
    """Steady-state probability of the transmitting state, (p - 1) / (p - q - 1)."""
    denom = p - q - 1
    if denom == 0:
        raise TrafficError("invalid_markov_params", f"degenerate chain for p={p}, q={q}")
    return (p - 1) / denom


def markov_step(mean_interval: float, p: float, q: float) -> float:
    """Duration of one chain step in seconds, S_M = T * pi1."""
    return mean_interval * markov_steady_state(p, q)


class TrafficModel(abc.ABC):
    kind: str = ""

    def __init__(self, mean_interval: float) -> None:
        if not mean_interval > 0:
            raise TrafficError("invalid_mean_interval", f"mean interval must be > 0, got {mean_interval}")
        self.mean_interval = float(mean_interval)

    @abc.abstractmethod
    def next_interval(self, rng: RandomStream) -> float:
        """Seconds until the next transmission."""

    def sample(self, rng: RandomStream, size: int) -> np.ndarray:
        """``size`` consecutive intervals, drawn exactly as a device draws them."""
        return np.fromiter((self.next_interval(rng) for _ in range(size)), dtype=float, count=size)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(T={self.mean_interval})"


class ExponentialTraffic(TrafficModel):
    kind = "exponential"

    def next_interval(self, rng: RandomStream) -> float:
        return -self.mean_interval * math.log(rng.uniform_positive())


class UniformTraffic(TrafficModel):
    kind = "uniform"

    def next_interval(self, rng: RandomStream) -> float:
        return rng.uniform() * 2.0 * self.mean_interval


class ConstantDriftTraffic(TrafficModel):
    kind = "constant_drift"

    def __init__(self, mean_interval: float, sigma: Optional[float] = None) -> None:
        super().__init__(mean_interval)
        self.sigma = self.mean_interval / 100.0 if sigma is None else float(sigma)
        if self.sigma < 0:
            raise TrafficError("invalid_drift", f"sigma must be >= 0, got {sigma}")
        self.started = False

    def next_interval(self, rng: RandomStream) -> float:
        if not self.started:
            # stationary phase: the first transmission lands anywhere within one period
            self.started = True
            return rng.uniform() * self.mean_interval
        return max(0.0, self.mean_interval + self.sigma * rng.normal())


class MarkovTraffic(TrafficModel):
    """Bursty two-state traffic; the initial state is drawn from the stationary distribution."""
    kind = "markov2"

    def __init__(self, mean_interval: float, p: float = DEFAULT_MARKOV_P, q: float = DEFAULT_MARKOV_Q) -> None:
        super().__init__(mean_interval)
        if not (0 < p < 1 and 0 < q <= 1):
            raise TrafficError("invalid_markov_params", f"need 0 < p < 1 and 0 < q <= 1, got p={p}, q={q}")
        self.p = float(p)
        self.q = float(q)
        self.pi1 = markov_steady_state(self.p, self.q)
        self.step = self.mean_interval * self.pi1
        self.state: Optional[int] = None

    def gap_steps(self, rng: RandomStream) -> int:
        if self.state is None:
            self.state = 1 if rng.uniform() < self.pi1 else 0
            if self.state == 0:
                # memoryless: steps until the chain first re-enters State 1
                self.state = 1
                return rng.geometric(1.0 - self.p)
        if rng.uniform() < 1.0 - self.q:
            return 1
        return 1 + rng.geometric(1.0 - self.p)

    def next_interval(self, rng: RandomStream) -> float:
        return self.step * self.gap_steps(rng)

    def mean_gap(self) -> float:
        """Expected steps between transmissions, 1 + q / (1 - p) = 1 / pi1."""
        return 1.0 + self.q / (1.0 - self.p)

    def __repr__(self) -> str:
        return f"MarkovTraffic(T={self.mean_interval}, p={self.p}, q={self.q})"


def mean_gap_check(model: MarkovTraffic) -> float:
    """Analytic mean interval S_M * E[gap]; equals T when the step length is consistent."""
    return model.step * model.mean_gap()


def markov_walk_intervals(p: float, q: float, step: float, rng: RandomStream, n: int, chunk: int = 65536) -> np.ndarray:
    """Reference sampler: explicit step-by-step walk of the chain, started on a transmitting step.

    Slow by construction; used to check the closed-form sampler.
    """
    gaps = np.empty(n, dtype=np.int64)
    state = 1
    steps = 0
    filled = 0
    draws = rng.generator.random(chunk)
    pos = 0
    while filled < n:
        if pos == chunk:
            draws = rng.generator.random(chunk)
            pos = 0
        u = draws[pos]
        pos += 1
        if state == 1:
            state = 0 if u < q else 1
        else:
            state = 0 if u < p else 1
        steps += 1
        if state == 1:
            gaps[filled] = steps
            filled += 1
            steps = 0
    return gaps * step


TRAFFIC_MODELS: Dict[str, Callable[..., TrafficModel]] = {
    "exponential": ExponentialTraffic,
    "uniform": UniformTraffic,
    "constant_drift": ConstantDriftTraffic,
    "markov2": MarkovTraffic,
}

TRAFFIC_ALIASES = {
    "poisson": "exponential",
    "exp": "exponential",
    "drift": "constant_drift",
    "markov": "markov2",
}


def canon_traffic(name: str) -> str:
    key = (name or "").strip().lower()
    key = TRAFFIC_ALIASES.get(key, key)
    if key not in TRAFFIC_MODELS:
        raise TrafficError("unknown_traffic_model", f"unknown traffic model {name!r}; expected one of {sorted(TRAFFIC_MODELS)}")
    return key


def make_traffic(
    name: str,
    mean_interval: float,
    *,
    sigma: Optional[float] = None,
    p: float = DEFAULT_MARKOV_P,
    q: float = DEFAULT_MARKOV_Q,
) -> TrafficModel:
    kind = canon_traffic(name)
    if kind == "constant_drift":
        return ConstantDriftTraffic(mean_interval, sigma=sigma)
    if kind == "markov2":
        return MarkovTraffic(mean_interval, p=p, q=q)
    return TRAFFIC_MODELS[kind](mean_interval)
