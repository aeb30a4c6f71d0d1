"""LR-FHSS protocol model: packet layout, node transmission routine and the baseline gateway.

A packet is ``header_copies`` header replicas followed by ``f`` payload fragments, each hopped
onto its own grid channel and sent back to back. The gateway keeps the on-air fragments per
channel; any same-channel overlap of half-open intervals ``[start, end)`` destroys both
fragments. A packet decodes when at least one header and ``ceil(f * CR)`` payload fragments
arrived clean.

Usage:
    from scripts.core import TransmissionParams, RegionalParams, build_packet, Gateway
"""
from __future__ import annotations

import csv
import enum
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

from .engine import Engine, ProcessGenerator, RandomStream, SimTime, seconds_to_ticks

if TYPE_CHECKING:  # pragma: no cover
    from .traffic import TrafficModel

logger = logging.getLogger(__name__)

HEADER_TICKS: SimTime = 233_472
FRAGMENT_TICKS: SimTime = 102_400
SUPPORTED_GRIDS = (35, 86)
SUPPORTED_HEADER_COPIES = (2, 3)
SUPPORTED_CODING_RATES = (Fraction(1, 3), Fraction(2, 3))

FragmentKey = Tuple[int, int]  # (packet_id, index)
CodingRate = Union[Fraction, str]


class ParameterError(ValueError):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


class ConsistencyError(RuntimeError):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


def coding_rate_of(value: CodingRate) -> Fraction:
    try:
        cr = Fraction(value)
    except (ValueError, TypeError, ZeroDivisionError):
        raise ParameterError("unsupported_coding_rate", f"unsupported coding rate {value!r}") from None
    if cr not in SUPPORTED_CODING_RATES:
        raise ParameterError("unsupported_coding_rate", f"unsupported coding rate {value!r}; expected 1/3 or 2/3")
    return cr


def fragment_count(payload_bytes: int, coding_rate: CodingRate) -> int:
    """Payload fragments for ``payload_bytes`` at ``coding_rate``: ceil((b + 3) / (6 * CR))."""
    cr = coding_rate_of(coding_rate)
    if payload_bytes < 1:
        raise ParameterError("invalid_payload", f"payload must be at least 1 byte, got {payload_bytes}")
    return math.ceil(Fraction(payload_bytes + 3) / (6 * cr))


def decode_threshold(f: int, coding_rate: CodingRate) -> int:
    """Minimum clean payload fragments needed to decode."""
    cr = coding_rate_of(coding_rate)
    if f < 1:
        raise ParameterError("invalid_payload", f"fragment count must be at least 1, got {f}")
    return math.ceil(f * cr)


def max_separation(grid_channels: int) -> int:
    # farthest channel is always at least this far from any channel of the grid
    return math.ceil((grid_channels - 1) / 2)


@dataclass(frozen=True)
class RegionalParams:
    grid_channels: int = 35
    header_duration: SimTime = HEADER_TICKS
    fragment_duration: SimTime = FRAGMENT_TICKS
    channel_bandwidth_hz: int = 488  # informational
    grid_multiplier: int = 8  # reporting only: N = multiplier * simulated nodes
    min_separation: int = 0  # 0 or 1: consecutive hops only need to differ

    def __post_init__(self) -> None:
        if self.grid_channels not in SUPPORTED_GRIDS:
            raise ParameterError("invalid_grid", f"grid must have 35 or 86 channels, got {self.grid_channels}")
        if not self.header_duration > self.fragment_duration > 0:
            raise ParameterError("invalid_grid", "need header_duration > fragment_duration > 0")
        if self.grid_multiplier < 1:
            raise ParameterError("invalid_grid", "grid_multiplier must be >= 1")
        if not 0 <= self.min_separation <= max_separation(self.grid_channels):
            raise ParameterError(
                "invalid_separation",
                f"min_separation must be within [0, {max_separation(self.grid_channels)}] for {self.grid_channels} channels",
            )


@dataclass(frozen=True)
class TransmissionParams:
    header_copies: int = 3
    coding_rate: Fraction = Fraction(1, 3)
    payload_bytes: int = 20

    def __post_init__(self) -> None:
        object.__setattr__(self, "coding_rate", coding_rate_of(self.coding_rate))
        if self.header_copies not in SUPPORTED_HEADER_COPIES:
            raise ParameterError("invalid_header_copies", f"header_copies must be 2 or 3, got {self.header_copies}")
        if self.payload_bytes < 1:
            raise ParameterError("invalid_payload", f"payload must be at least 1 byte, got {self.payload_bytes}")

    @property
    def fragments(self) -> int:
        return fragment_count(self.payload_bytes, self.coding_rate)

    @property
    def threshold(self) -> int:
        return decode_threshold(self.fragments, self.coding_rate)


def packet_airtime(params: TransmissionParams, region: RegionalParams) -> SimTime:
    """Time on air of one packet (T_pkt) in ticks."""
    return params.header_copies * region.header_duration + params.fragments * region.fragment_duration


class FragmentKind(str, enum.Enum):
    HEADER = "header"
    PAYLOAD = "payload"


class FragmentStatus(str, enum.Enum):
    PENDING = "pending"
    ON_AIR = "on_air"
    CLEAN = "clean"
    COLLIDED = "collided"


@dataclass(eq=False)
class Fragment:
    kind: FragmentKind
    index: int
    channel: int
    duration: SimTime
    packet: "Packet" = field(repr=False)
    start: Optional[SimTime] = None
    status: FragmentStatus = FragmentStatus.PENDING
    colliders: Set[FragmentKey] = field(default_factory=set, repr=False)

    @property
    def packet_id(self) -> int:
        return self.packet.packet_id

    @property
    def key(self) -> FragmentKey:
        return (self.packet.packet_id, self.index)

    @property
    def end(self) -> Optional[SimTime]:
        return None if self.start is None else self.start + self.duration

    @property
    def is_header(self) -> bool:
        return self.kind is FragmentKind.HEADER

    @property
    def is_last(self) -> bool:
        return self.index == len(self.packet.elements) - 1


@dataclass(eq=False)
class Packet:
    packet_id: int
    node_id: int
    threshold: int
    elements: List[Fragment] = field(default_factory=list)
    hop_sequence: List[int] = field(default_factory=list)
    cursor: int = 0
    success: Optional[bool] = None  # None while undecided

    def add_element(self, kind: FragmentKind, channel: int, duration: SimTime) -> Fragment:
        frag = Fragment(kind=kind, index=len(self.elements), channel=channel, duration=duration, packet=self)
        self.elements.append(frag)
        self.hop_sequence.append(channel)
        return frag

    def next_fragment(self) -> Optional[Fragment]:
        if self.cursor >= len(self.elements):
            return None
        frag = self.elements[self.cursor]
        self.cursor += 1
        return frag

    @property
    def headers(self) -> List[Fragment]:
        return [f for f in self.elements if f.is_header]

    @property
    def payload(self) -> List[Fragment]:
        return [f for f in self.elements if not f.is_header]

    @property
    def start(self) -> Optional[SimTime]:
        return self.elements[0].start if self.elements else None

    @property
    def end(self) -> Optional[SimTime]:
        return self.elements[-1].end if self.elements else None

    @property
    def airtime(self) -> SimTime:
        return sum(f.duration for f in self.elements)


def hop_sequence(length: int, region: RegionalParams, rng: RandomStream) -> List[int]:
    """Uniform i.i.d. channels; a draw too close to the previous hop is redrawn."""
    separation = max(1, region.min_separation)
    hops: List[int] = []
    prev: Optional[int] = None
    for _ in range(length):
        channel = rng.integer(region.grid_channels)
        while prev is not None and abs(channel - prev) < separation:
            channel = rng.integer(region.grid_channels)
        hops.append(channel)
        prev = channel
    return hops


def packet_from_hops(
    params: TransmissionParams,
    region: RegionalParams,
    hops: Sequence[int],
    node_id: int,
    packet_id: int,
) -> Packet:
    f = params.fragments
    if len(hops) != params.header_copies + f:
        raise ParameterError("invalid_payload", f"need {params.header_copies + f} hops, got {len(hops)}")
    packet = Packet(packet_id=packet_id, node_id=node_id, threshold=decode_threshold(f, params.coding_rate))
    for i, channel in enumerate(hops):
        if not 0 <= channel < region.grid_channels:
            raise ParameterError("invalid_grid", f"hop {channel} outside grid of {region.grid_channels}")
        if i < params.header_copies:
            packet.add_element(FragmentKind.HEADER, channel, region.header_duration)
        else:
            packet.add_element(FragmentKind.PAYLOAD, channel, region.fragment_duration)
    return packet


def build_packet(
    params: TransmissionParams,
    region: RegionalParams,
    rng: RandomStream,
    node_id: int,
    packet_id: int,
) -> Packet:
    hops = hop_sequence(params.header_copies + params.fragments, region, rng)
    return packet_from_hops(params, region, hops, node_id, packet_id)


@dataclass
class NodeStats:
    transmitted: int = 0
    succeeded: int = 0


class FragmentRecord(NamedTuple):
    packet_id: int
    node_id: int
    index: int
    kind: str
    channel: int
    start: SimTime
    end: SimTime
    status: str


TRACE_HEADER = FragmentRecord._fields


def fragment_record(frag: Fragment) -> FragmentRecord:
    return FragmentRecord(
        frag.packet_id, frag.packet.node_id, frag.index, frag.kind.value,
        frag.channel, frag.start, frag.end, frag.status.value,
    )


def write_fragment_trace(fragments: Iterable[Fragment], path: Union[str, Path]) -> int:
    """One CSV row per fragment; the input for an external collision check."""
    p = Path(path)
    count = 0
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for frag in fragments:
                writer.writerow(fragment_record(frag))
                count += 1
    except OSError as exc:
        raise OSError(f"cannot write fragment trace {p}: {exc.strerror or exc}") from exc
    return count


class Gateway:
    """Baseline receiver: time-frequency collision detection and decode at packet end."""

    def __init__(self, region: RegionalParams, record_trace: bool = False) -> None:
        self.region = region
        self.active: Dict[int, Dict[FragmentKey, Fragment]] = defaultdict(dict)
        self.per_node: Dict[int, NodeStats] = {}
        self.decoded: Set[int] = set()
        self.completed = 0
        self.trace: Optional[List[Fragment]] = [] if record_trace else None
        self._packet_ids = itertools.count()

    def next_packet_id(self) -> int:
        return next(self._packet_ids)

    def register(self, node: "Node") -> None:
        self.per_node[node.node_id] = node.stats

    def stats_for(self, node_id: int) -> NodeStats:
        return self.per_node.setdefault(node_id, NodeStats())

    def on_fragment_start(self, frag: Fragment, now: SimTime) -> None:
        if frag.status is not FragmentStatus.PENDING:
            raise ConsistencyError("fragment_already_active", f"fragment {frag.key} already started")
        frag.start = now
        frag.status = FragmentStatus.ON_AIR
        channel = self.active[frag.channel]
        for other in channel.values():
            # a fragment ending exactly now no longer occupies the channel
            if other.start + other.duration > now:
                frag.colliders.add(other.key)
                other.colliders.add(frag.key)
        channel[frag.key] = frag

    def on_fragment_end(self, frag: Fragment, now: SimTime) -> None:
        channel = self.active.get(frag.channel)
        if channel is None or channel.pop(frag.key, None) is None:
            raise ConsistencyError("fragment_not_active", f"fragment {frag.key} is not on air")
        frag.status = FragmentStatus.COLLIDED if frag.colliders else FragmentStatus.CLEAN
        if self.trace is not None:
            self.trace.append(frag)
        if frag.is_last:
            self.complete(frag.packet, now)

    def complete(self, packet: Packet, now: SimTime) -> None:
        # counted before decoding so succeeded never runs ahead of transmitted
        self.stats_for(packet.node_id).transmitted += 1
        self.completed += 1
        self.receive(packet, now)

    def receive(self, packet: Packet, now: SimTime) -> None:
        self.try_decode(packet)

    def try_decode(self, packet: Packet) -> bool:
        clean_headers = sum(1 for f in packet.headers if f.status is FragmentStatus.CLEAN)
        clean_payload = sum(1 for f in packet.payload if f.status is FragmentStatus.CLEAN)
        ok = clean_headers >= 1 and clean_payload >= packet.threshold
        self.settle(packet, ok)
        return ok

    def settle(self, packet: Packet, ok: bool) -> None:
        if packet.success is not None:
            raise ConsistencyError("packet_already_final", f"packet {packet.packet_id} already settled")
        packet.success = ok
        if ok:
            self.decoded.add(packet.packet_id)
            self.stats_for(packet.node_id).succeeded += 1

    def close(self, now: SimTime) -> None:
        """End of run: fragments still on air go to the trace as ``on_air``."""
        if self.trace is None:
            return
        leftovers = [f for channel in self.active.values() for f in channel.values()]
        leftovers.sort(key=lambda f: (f.start, f.key))
        self.trace.extend(leftovers)

    @property
    def transmitted(self) -> int:
        return sum(s.transmitted for s in self.per_node.values())

    @property
    def succeeded(self) -> int:
        return sum(s.succeeded for s in self.per_node.values())


def send_packet(packet: Packet, engine: Engine, gateway: Gateway) -> ProcessGenerator:
    """Put every element on air in order, back to back."""
    frag = packet.next_fragment()
    while frag is not None:
        gateway.on_fragment_start(frag, engine.now)
        yield engine.timeout(frag.duration, label="element")
        gateway.on_fragment_end(frag, engine.now)
        frag = packet.next_fragment()


INTERVAL_ANCHORS = ("end", "start")


@dataclass(eq=False)
class Node:
    """End device running the unslotted ALOHA transmission routine."""
    node_id: int
    traffic: "TrafficModel"
    rng: RandomStream
    params: TransmissionParams = field(default_factory=TransmissionParams)
    region: RegionalParams = field(default_factory=RegionalParams)
    anchor: str = "end"
    stats: NodeStats = field(default_factory=NodeStats)

    def __post_init__(self) -> None:
        if self.anchor not in INTERVAL_ANCHORS:
            raise ParameterError("invalid_anchor", f"anchor must be one of {INTERVAL_ANCHORS}, got {self.anchor!r}")

    @property
    def transmitted(self) -> int:
        return self.stats.transmitted

    @property
    def succeeded(self) -> int:
        return self.stats.succeeded

    def transmit(self, engine: Engine, gateway: Gateway) -> ProcessGenerator:
        last_start: Optional[SimTime] = None
        while True:
            interval = seconds_to_ticks(self.traffic.next_interval(self.rng))
            if self.anchor == "start" and last_start is not None:
                wait = max(last_start + interval - engine.now, 0)
            else:
                wait = interval
            yield engine.timeout(wait, label="wait")
            packet = build_packet(self.params, self.region, self.rng, self.node_id, gateway.next_packet_id())
            last_start = engine.now
            yield from send_packet(packet, engine, gateway)
