"""Discrete-event kernel: an integer microsecond clock on top of a simpy environment.

Every timed occurrence of a run goes through ``Engine.schedule`` (one-shot actions) or
``Engine.timeout`` (process waits). Both stamp a per-run insertion sequence, so dispatch
order is ``(fire_time, sequence)`` and replaying a run fires the identical trace.

Random streams are derived per (master_seed, stream_id); the derivation is bit-exact:

    z = (master_seed ^ stream_id)            mod 2**64
    z = z + 0x9E3779B97F4A7C15               mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    seed = z ^ (z >> 31)
    generator = numpy.random.Generator(numpy.random.PCG64(seed))
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, List, Optional, Tuple

import numpy as np
import simpy

logger = logging.getLogger(__name__)

SimTime = int  # microseconds since simulation start
TICKS_PER_SECOND = 1_000_000
MASK64 = (1 << 64) - 1

ProcessGenerator = Generator[simpy.Event, Any, Any]


class CausalityError(RuntimeError):
    code = "causality_violation"


def seconds_to_ticks(seconds: float) -> SimTime:
    if seconds < 0:
        raise ValueError(f"negative duration: {seconds}")
    return int(round(seconds * TICKS_PER_SECOND))


def ticks_to_seconds(ticks: SimTime) -> float:
    return ticks / TICKS_PER_SECOND


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Event:
    fire_time: SimTime
    sequence: int
    action: Optional[Callable[[], Any]] = field(default=None, compare=False, repr=False)
    label: str = ""


@dataclass
class RandomStream:
    """One reproducible numpy stream; owned by a single node or process."""
    stream_id: int
    seed: int
    generator: np.random.Generator = field(repr=False)

    def uniform(self) -> float:
        """U on [0, 1)."""
        return float(self.generator.random())

    def uniform_positive(self) -> float:
        """U on (0, 1]."""
        return 1.0 - float(self.generator.random())

    def normal(self) -> float:
        return float(self.generator.standard_normal())

    def integer(self, high: int) -> int:
        return int(self.generator.integers(high))

    def geometric(self, p: float) -> int:
        # number of trials up to and including the first success, >= 1
        return int(self.generator.geometric(p))


def derive_stream(master_seed: int, stream_id: int) -> RandomStream:
    seed = mix64((master_seed ^ stream_id) & MASK64)
    return RandomStream(stream_id=stream_id, seed=seed, generator=np.random.Generator(np.random.PCG64(seed)))


class Engine:
    """Single-threaded run loop. One instance per Monte Carlo iteration, never shared."""

    def __init__(self, record_trace: bool = False) -> None:
        self.env = simpy.Environment(initial_time=0)
        self._sequence = itertools.count()
        self.fired = 0
        self.trace: Optional[List[Tuple[SimTime, int, str]]] = [] if record_trace else None

    @property
    def now(self) -> SimTime:
        return self.env.now

    def schedule(self, at: SimTime, action: Callable[[], Any], label: str = "action") -> Event:
        if at < self.env.now:
            raise CausalityError(f"causality violation: cannot schedule at {at}, clock is {self.env.now}")
        event = Event(at, next(self._sequence), action, label)
        pending = self.env.timeout(at - self.env.now)
        pending.callbacks.append(lambda _ev, event=event: self._fire(event))
        return event

    def timeout(self, delay: SimTime, label: str = "wait") -> simpy.Timeout:
        """Counted wait for a process; yield the returned event."""
        if delay < 0:
            raise CausalityError(f"causality violation: negative delay {delay}")
        event = Event(self.env.now + delay, next(self._sequence), None, label)
        pending = self.env.timeout(delay)
        pending.callbacks.append(lambda _ev, event=event: self._fire(event))
        return pending

    def process(self, generator: ProcessGenerator) -> simpy.Process:
        return self.env.process(generator)

    def _fire(self, event: Event) -> None:
        self.fired += 1
        if self.trace is not None:
            self.trace.append((event.fire_time, event.sequence, event.label))
        if event.action is not None:
            event.action()

    def run_until(self, end: SimTime) -> int:
        """Dispatch every event with fire_time <= end, then park the clock at ``end``."""
        if end < self.env.now:
            raise CausalityError(f"causality violation: horizon {end} is before clock {self.env.now}")
        before = self.fired
        while self.env.peek() <= end:
            self.env.step()
        if self.env.now < end:
            # uncounted marker; moves simpy's clock without firing an engine event
            self.env.timeout(end - self.env.now)
            self.env.step()
        fired = self.fired - before
        logger.debug("run_until end=%s fired=%s", end, fired)
        return fired
