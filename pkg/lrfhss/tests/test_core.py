import csv
from fractions import Fraction

import pytest

from scripts.core import (
    ConsistencyError,
    FragmentStatus,
    Gateway,
    Node,
    ParameterError,
    RegionalParams,
    TRACE_HEADER,
    TransmissionParams,
    build_packet,
    coding_rate_of,
    decode_threshold,
    fragment_count,
    hop_sequence,
    max_separation,
    packet_airtime,
    packet_from_hops,
    send_packet,
    write_fragment_trace,
)
from scripts.engine import Engine, derive_stream, seconds_to_ticks
from scripts.traffic import ExponentialTraffic, TrafficModel

DR8 = TransmissionParams()
EU35 = RegionalParams()


def test_fragment_count_table():
    for b in range(1, 256):
        # integer ceilings: (b + 3) / 2 for CR 1/3 and (b + 3) / 4 for CR 2/3
        assert fragment_count(b, "1/3") == (b + 3 + 1) // 2
        assert fragment_count(b, Fraction(2, 3)) == (b + 3 + 3) // 4


def test_dr8_layout_and_airtime():
    assert DR8.fragments == 12
    assert DR8.threshold == 4
    assert packet_airtime(DR8, EU35) == 1_929_216
    cr23 = TransmissionParams(coding_rate="2/3")
    assert (cr23.fragments, cr23.threshold) == (6, 4)
    assert decode_threshold(1, "1/3") == 1


@pytest.mark.parametrize(
    "build,code",
    [
        (lambda: coding_rate_of("2/5"), "unsupported_coding_rate"),
        (lambda: RegionalParams(grid_channels=40), "invalid_grid"),
        (lambda: TransmissionParams(header_copies=4), "invalid_header_copies"),
        (lambda: TransmissionParams(payload_bytes=0), "invalid_payload"),
        (lambda: RegionalParams(min_separation=max_separation(35) + 1), "invalid_separation"),
    ],
)
def test_parameter_validation_codes(build, code):
    with pytest.raises(ParameterError) as exc:
        build()
    assert exc.value.code == code


def test_hop_sequence_respects_separation():
    rng = derive_stream(3, 0)
    hops = hop_sequence(2000, EU35, rng)
    assert all(a != b for a, b in zip(hops, hops[1:]))
    assert all(0 <= h < 35 for h in hops)
    wide = RegionalParams(min_separation=10)
    hops = hop_sequence(2000, wide, rng)
    assert all(abs(a - b) >= 10 for a, b in zip(hops, hops[1:]))
    # widest allowed separation still always has a compliant channel
    widest = RegionalParams(min_separation=max_separation(35))
    assert len(hop_sequence(200, widest, rng)) == 200


def test_build_packet_layout():
    p = build_packet(DR8, EU35, derive_stream(0, 0), node_id=4, packet_id=9)
    assert [f.is_header for f in p.elements] == [True] * 3 + [False] * 12
    assert p.airtime == packet_airtime(DR8, EU35)
    assert p.hop_sequence == [f.channel for f in p.elements]
    assert p.elements[-1].is_last and not p.elements[0].is_last


def _run_pair(hops_a, hops_b, offset=0):
    eng = Engine()
    gw = Gateway(EU35, record_trace=True)
    a = packet_from_hops(DR8, EU35, hops_a, node_id=0, packet_id=0)
    b = packet_from_hops(DR8, EU35, hops_b, node_id=1, packet_id=1)
    eng.process(send_packet(a, eng, gw))

    def delayed():
        yield eng.timeout(offset)
        yield from send_packet(b, eng, gw)

    eng.process(delayed())
    eng.run_until(seconds_to_ticks(10))
    gw.close(eng.now)
    return gw, a, b


HOPS_A = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]
HOPS_B = [20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34]


def test_identical_hops_and_timing_both_fail():
    gw, a, b = _run_pair(HOPS_A, list(HOPS_A))
    assert gw.transmitted == 2
    assert gw.succeeded == 0
    assert a.success is False and b.success is False
    assert all(f.status is FragmentStatus.COLLIDED for f in a.elements)


def test_disjoint_hops_both_succeed():
    gw, a, b = _run_pair(HOPS_A, HOPS_B)
    assert gw.succeeded == 2
    assert gw.decoded == {0, 1}
    assert all(f.status is FragmentStatus.CLEAN for f in a.elements + b.elements)


def test_decode_threshold_boundary():
    # shared: header 0 and eight payload fragments -> four clean payload left, exactly the threshold
    shared = {0} | set(range(3, 11))
    hops_b = [HOPS_A[i] if i in shared else HOPS_B[i] for i in range(15)]
    gw, a, b = _run_pair(HOPS_A, hops_b)
    assert a.success and b.success
    # one more shared fragment drops below the threshold
    shared.add(11)
    hops_b = [HOPS_A[i] if i in shared else HOPS_B[i] for i in range(15)]
    gw, a, b = _run_pair(HOPS_A, hops_b)
    assert a.success is False and b.success is False


def test_back_to_back_on_same_channel_is_not_a_collision():
    # b starts exactly when a's last element ends, on the same channel
    hops_b = [HOPS_A[-1]] + HOPS_B[1:]
    gw, a, b = _run_pair(HOPS_A, hops_b, offset=packet_airtime(DR8, EU35))
    assert a.elements[-1].colliders == set()
    assert b.elements[0].colliders == set()
    assert gw.succeeded == 2


def test_collider_sets_are_symmetric():
    gw, a, b = _run_pair(HOPS_A, HOPS_A[:5] + HOPS_B[5:], offset=0)
    for frag in a.elements + b.elements:
        other = b if frag.packet is a else a
        for pid, idx in frag.colliders:
            assert frag.key in other.elements[idx].colliders


def test_gateway_consistency_errors():
    gw = Gateway(EU35)
    p = packet_from_hops(DR8, EU35, HOPS_A, node_id=0, packet_id=0)
    with pytest.raises(ConsistencyError) as exc:
        gw.on_fragment_end(p.elements[0], 0)
    assert exc.value.code == "fragment_not_active"
    gw.on_fragment_start(p.elements[0], 0)
    with pytest.raises(ConsistencyError) as exc:
        gw.on_fragment_start(p.elements[0], 10)
    assert exc.value.code == "fragment_already_active"


def test_trace_includes_on_air_fragments(tmp_path):
    eng = Engine()
    gw = Gateway(EU35, record_trace=True)
    p = packet_from_hops(DR8, EU35, HOPS_A, node_id=0, packet_id=0)
    eng.process(send_packet(p, eng, gw))
    eng.run_until(300_000)  # first header done, second on air
    gw.close(eng.now)
    assert [f.status.value for f in gw.trace] == ["clean", "on_air"]
    out = tmp_path / "trace.csv"
    assert write_fragment_trace(gw.trace, out) == 2
    rows = list(csv.reader(out.open(encoding="utf-8")))
    assert tuple(rows[0]) == TRACE_HEADER
    assert rows[0] == "packet_id,node_id,index,kind,channel,start,end,status".split(",")
    assert rows[2][-1] == "on_air"


@pytest.mark.parametrize("anchor", ["end", "start"])
def test_node_never_overlaps_itself(anchor):
    eng = Engine()
    gw = Gateway(EU35, record_trace=True)
    # mean interval shorter than the airtime: intervals regularly fall inside the previous packet
    node = Node(0, ExponentialTraffic(1.0), derive_stream(5, 0), DR8, EU35, anchor=anchor)
    gw.register(node)
    eng.process(node.transmit(eng, gw))
    eng.run_until(seconds_to_ticks(600))
    gw.close(eng.now)
    frags = sorted(gw.trace, key=lambda f: f.start)
    assert all(a.end <= b.start for a, b in zip(frags, frags[1:]))
    assert node.transmitted > 100
    assert node.succeeded == node.transmitted


def test_start_anchor_sends_more_than_end_anchor():
    counts = {}
    for anchor in ("end", "start"):
        eng = Engine()
        gw = Gateway(EU35)
        node = Node(0, ExponentialTraffic(10.0), derive_stream(5, 0), DR8, EU35, anchor=anchor)
        gw.register(node)
        eng.process(node.transmit(eng, gw))
        eng.run_until(seconds_to_ticks(3600))
        counts[anchor] = node.transmitted
    # end anchoring adds one airtime per interval: about 3600 / 11.9 versus 3600 / 10
    assert counts["start"] > counts["end"]


def test_invalid_anchor_rejected():
    with pytest.raises(ParameterError):
        Node(0, ExponentialTraffic(1.0), derive_stream(0, 0), anchor="middle")


class EverySecond(TrafficModel):
    kind = "fixed"

    def next_interval(self, rng):
        return self.mean_interval


def test_packet_on_air_at_the_horizon_is_not_counted():
    eng = Engine()
    gw = Gateway(EU35, record_trace=True)
    node = Node(0, EverySecond(1.0), derive_stream(9, 0), DR8, EU35)
    gw.register(node)
    eng.process(node.transmit(eng, gw))
    second, airtime = seconds_to_ticks(1.0), packet_airtime(DR8, EU35)
    # packet 0 spans [1 s, 1 s + A], packet 1 starts one second later and is cut at half its airtime
    eng.run_until(2 * second + airtime + airtime // 2)
    gw.close(eng.now)
    assert node.transmitted == gw.transmitted == 1
    assert gw.decoded == {0}
    assert {f.packet_id for f in gw.trace if f.status is FragmentStatus.ON_AIR} == {1}
    last = {}
    for frag in gw.trace:
        if frag.index >= last.get(frag.packet_id, (-1, None))[0]:
            last[frag.packet_id] = (frag.index, frag.status)
    finished = [pid for pid, (_, status) in last.items() if status is not FragmentStatus.ON_AIR]
    assert finished == [0] and len(finished) == gw.transmitted
