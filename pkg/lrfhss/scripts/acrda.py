"""ACRDA receiver: packet memory plus a periodic sliding window with interference cancellation.

Completed packets are buffered instead of decoded on the spot. Every ``step * T_pkt`` the window
``[now - W * T_pkt, now]`` is searched for packets that fit inside it entirely; those are decoded
iteratively, each success cancelling its own fragments from the colliders of the others. A packet
that slides out of the window without being decoded fails for good.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, NamedTuple, Optional, Set

from .core import (
    Fragment,
    FragmentKey,
    Gateway,
    Packet,
    ParameterError,
    RegionalParams,
    TransmissionParams,
    packet_airtime,
)
from .engine import Engine, ProcessGenerator, SimTime
from .logs import log_event

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AcrdaParams:
    """Window and step in packet airtimes.

    Windows end on a fixed clock grid ``k * step``. ``window >= 1 + step`` guarantees that every
    packet lies wholly inside at least one window that closes after the packet completed.
    """
    window: float = 2.0
    step: float = 0.5

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ParameterError("invalid_acrda_step", f"acrda step must be > 0, got {self.step}")
        if self.window < 1 + self.step:
            raise ParameterError(
                "invalid_acrda_window",
                f"acrda window must be >= 1 + step = {1 + self.step} packet airtimes, got {self.window}",
            )

    def step_ticks(self, t_pkt: SimTime) -> SimTime:
        return max(1, int(round(self.step * t_pkt)))

    def window_ticks(self, t_pkt: SimTime) -> SimTime:
        # the slack beyond one airtime never rounds below one step
        return t_pkt + max(self.step_ticks(t_pkt), int(round((self.window - 1) * t_pkt)))


class Window(NamedTuple):
    start: SimTime
    end: SimTime

    def contains(self, packet: Packet) -> bool:
        return self.start <= packet.start and packet.end <= self.end


@dataclass
class AcrdaBuffer:
    fragments: Dict[FragmentKey, Fragment] = field(default_factory=dict)
    packets: Dict[int, Packet] = field(default_factory=dict)  # completion order
    decoded: Set[int] = field(default_factory=set)
    # purged but decoded: still cancellable from packets that overlapped them, id -> end
    retired: Dict[int, SimTime] = field(default_factory=dict)
    longest: SimTime = 0

    def add(self, packet: Packet) -> None:
        for frag in packet.elements:
            self.fragments[frag.key] = frag
        self.packets[packet.packet_id] = packet
        self.longest = max(self.longest, packet.airtime)

    def remove(self, packet: Packet) -> None:
        for frag in packet.elements:
            self.fragments.pop(frag.key, None)
        self.packets.pop(packet.packet_id, None)
        if packet.packet_id in self.decoded:
            self.retired[packet.packet_id] = packet.end

    def forget(self, before: float) -> int:
        """Drop retired ids no pending packet can overlap: anything overlapping them ends before ``before``."""
        stale = [pid for pid, end in self.retired.items() if end + self.longest < before]
        for pid in stale:
            del self.retired[pid]
            self.decoded.discard(pid)
        return len(stale)


def recoverable(frag: Fragment, decoded: Set[int]) -> bool:
    # clean fragments have no colliders and pass trivially
    return all(packet_id in decoded for packet_id, _ in frag.colliders)


def decodable(packet: Packet, decoded: Set[int]) -> bool:
    if not any(recoverable(f, decoded) for f in packet.headers):
        return False
    return sum(1 for f in packet.payload if recoverable(f, decoded)) >= packet.threshold


def sic_decode_window(buffer: AcrdaBuffer, window: Window) -> Set[int]:
    """Decode to a fixed point inside ``window``; returns the packet ids decoded by this call."""
    if window.start > window.end:
        raise ValueError(f"malformed window {window}")
    pending = [p for p in buffer.packets.values() if p.packet_id not in buffer.decoded and window.contains(p)]
    newly: Set[int] = set()
    progress = True
    while progress and pending:
        progress = False
        still = []
        for packet in pending:
            if decodable(packet, buffer.decoded):
                buffer.decoded.add(packet.packet_id)
                newly.add(packet.packet_id)
                progress = True
            else:
                still.append(packet)
        pending = still
    return newly


def finalize_and_purge(
    buffer: AcrdaBuffer,
    before: float,
    settle: Optional[Callable[[Packet, bool], None]] = None,
) -> int:
    """Settle every buffered packet that ended before ``before`` and drop its fragments."""
    done = [p for p in buffer.packets.values() if p.end < before]
    for packet in done:
        ok = packet.packet_id in buffer.decoded
        if settle is None:
            packet.success = ok
        else:
            settle(packet, ok)
        buffer.remove(packet)
    buffer.forget(before)
    return len(done)


class AcrdaGateway(Gateway):
    def __init__(
        self,
        region: RegionalParams,
        params: TransmissionParams,
        acrda: Optional[AcrdaParams] = None,
        record_trace: bool = False,
    ) -> None:
        super().__init__(region, record_trace=record_trace)
        self.acrda = acrda or AcrdaParams()
        self.t_pkt = packet_airtime(params, region)
        self.buffer = AcrdaBuffer(longest=self.t_pkt)
        self.windows = 0

    def receive(self, packet: Packet, now: SimTime) -> None:
        self.buffer.add(packet)

    def process_window(self, w_end: SimTime, final: bool = False) -> Set[int]:
        window = Window(w_end - self.acrda.window_ticks(self.t_pkt), w_end)
        newly = sic_decode_window(self.buffer, window)
        finalized = finalize_and_purge(self.buffer, float("inf") if final else window.start, self.settle)
        self.windows += 1
        log_event(
            "acrda.window", level=logging.DEBUG, log=logger,
            start=window.start, end=window.end, decoded=len(newly), finalized=finalized,
        )
        return newly

    def close(self, now: SimTime) -> None:
        # one last pass at the horizon settles whatever is still buffered
        self.process_window(now, final=True)
        super().close(now)


def window_routine(engine: Engine, gateway: AcrdaGateway) -> ProcessGenerator:
    """Independent process firing the decoding window at k * step * T_pkt, k = 1, 2, ..."""
    step = gateway.acrda.step_ticks(gateway.t_pkt)
    while True:
        yield engine.timeout(step, label="acrda.window")
        gateway.process_window(engine.now)
