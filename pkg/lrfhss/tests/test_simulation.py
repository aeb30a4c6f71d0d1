"""Whole-network checks: collision bookkeeping, throughput, success trends and the ACRDA comparison.

Campaign-sized checks are marked ``slow``; deselect with ``-m "not slow"``.
"""
import csv
from collections import defaultdict

import numpy as np
import pytest

from scripts.core import FragmentStatus
from scripts.metrics import aggregate, node_success_samples, throughput
from scripts.settings import ConfigError, parse_config
from scripts.simulation import build_network, run_iteration, run_seed


def config(**values):
    return parse_config("", overrides=values)


def overlapping_pairs(fragments):
    """Reference sweep: every same-channel pair whose half-open intervals intersect."""
    by_channel = defaultdict(list)
    for f in fragments:
        by_channel[f.channel].append(f)
    pairs = set()
    for frags in by_channel.values():
        frags.sort(key=lambda f: f.start)
        for i, a in enumerate(frags):
            for b in frags[i + 1:]:
                if b.start >= a.end:
                    break
                pairs.add(frozenset((a.key, b.key)))
    return pairs


def test_collision_sets_match_reference_sweep():
    rng = np.random.default_rng(5)
    total_pairs = 0
    for case in range(50):
        cfg = config(
            nodes_sim=str(int(rng.integers(2, 21))),
            sim_time=float(rng.integers(60, 301)),
            mean_interval=10.0,
            master_seed=int(rng.integers(0, 2**32)),
        )
        net = build_network(cfg, cfg.nodes_sim[0], iteration=case, record_trace=True)
        net.engine.run_until(cfg.sim_ticks)
        net.gateway.close(net.engine.now)
        trace = net.gateway.trace
        expected = overlapping_pairs(trace)
        engine_pairs = {frozenset((f.key, other)) for f in trace for other in f.colliders}
        assert engine_pairs == expected
        total_pairs += len(expected)
    assert total_pairs > 0


def test_run_seed_keys_by_node_count():
    assert run_seed(0, 125, 0) != run_seed(0, 250, 0)
    assert run_seed(0, 125, 0) != run_seed(0, 125, 1)
    assert run_seed(1, 125, 0) != run_seed(0, 125, 0)


def test_scenarios_are_independent_of_the_sweep():
    solo = run_iteration(config(nodes_sim="50", sim_time=600.0, mean_interval=30.0), 50, 1)
    swept_cfg = config(nodes_sim="25,50", sim_time=600.0, mean_interval=30.0)
    swept = run_iteration(swept_cfg, 50, 1)
    assert solo.metrics == swept.metrics
    assert solo.decoded == swept.decoded


def test_event_replay_is_identical():
    cfg = config(nodes_sim="10", sim_time=300.0, mean_interval=20.0, receiver="acrda")
    a = run_iteration(cfg, 10, 0, record_events=True)
    b = run_iteration(cfg, 10, 0, record_events=True)
    assert a.events == b.events
    assert a.event_count == len(a.events) > 0


def test_trace_written_per_iteration(tmp_path):
    cfg = config(nodes_sim="5", sim_time=120.0, mean_interval=10.0)
    res = run_iteration(cfg, 5, 2, trace_dir=str(tmp_path))
    assert res.trace_path == str(tmp_path / "n5_it2.csv")
    rows = list(csv.DictReader(open(res.trace_path, encoding="utf-8")))
    assert rows and {r["status"] for r in rows} <= {"clean", "collided", "on_air"}
    assert len({r["packet_id"] for r in rows}) >= res.metrics.transmitted


def test_every_completed_packet_is_settled_once():
    cfg = config(nodes_sim="60", sim_time=600.0, mean_interval=15.0, receiver="acrda")
    net = build_network(cfg, 60, 0)
    net.engine.run_until(cfg.sim_ticks)
    net.gateway.close(net.engine.now)
    assert not net.gateway.buffer.packets
    assert net.gateway.succeeded == len(net.gateway.decoded)
    assert net.gateway.transmitted == net.gateway.completed


@pytest.mark.parametrize("window,step", [(1.5, 0.5), (1.25, 0.25), (2.0, 1.0)])
def test_acrda_superset_holds_at_the_smallest_window(window, step):
    cfg = config(nodes_sim="20", sim_time=600.0, mean_interval=30.0, acrda_window=window, acrda_step=step)
    base = run_iteration(cfg, 20, 0, receiver="baseline")
    acrda = run_iteration(cfg, 20, 0, receiver="acrda")
    assert base.decoded
    assert acrda.decoded >= base.decoded


def test_window_of_one_airtime_is_rejected():
    with pytest.raises(ConfigError) as exc:
        config(acrda_window=1.0)
    assert exc.value.key == "acrda_window"


@pytest.mark.parametrize("receiver", ["baseline", "acrda"])
def test_only_packets_finished_by_the_horizon_are_counted(receiver):
    # odd horizon so some packets are cut off mid-air
    cfg = config(nodes_sim="30", sim_time=300.123, mean_interval=5.0, receiver=receiver)
    net = build_network(cfg, 30, 0, record_trace=True)
    net.engine.run_until(cfg.sim_ticks)
    net.gateway.close(net.engine.now)
    trace = net.gateway.trace
    finished = {f.packet_id for f in trace if f.is_last and f.status is not FragmentStatus.ON_AIR}
    cut_off = {f.packet_id for f in trace if f.status is FragmentStatus.ON_AIR}
    assert cut_off
    assert not finished & cut_off
    assert net.gateway.transmitted == len(finished)
    assert net.gateway.decoded <= finished
    assert all(f.end <= cfg.sim_ticks for f in trace if f.packet_id in finished)
    per_node = defaultdict(int)
    for f in trace:
        if f.packet_id in finished and f.is_last:
            per_node[f.packet.node_id] += 1
    assert {n: s.transmitted for n, s in net.gateway.per_node.items() if s.transmitted} == dict(per_node)


def test_retired_ids_do_not_accumulate():
    cfg = config(nodes_sim="60", sim_time=1200.0, mean_interval=15.0, receiver="acrda")
    net = build_network(cfg, 60, 0)
    net.engine.run_until(cfg.sim_ticks)
    buffer = net.gateway.buffer
    assert net.gateway.succeeded > 1000
    # only ids that ended within the last few airtimes are still held
    assert len(buffer.decoded) < 100
    assert all(end + buffer.longest >= net.engine.now - 3 * net.gateway.t_pkt for end in buffer.retired.values())
    net.gateway.close(net.engine.now)
    assert not buffer.decoded and not buffer.retired


@pytest.mark.slow
@pytest.mark.parametrize("traffic,iterations", [
    ("exponential", 10),
    ("uniform", 10),
    ("constant_drift", 10),
    ("markov2", 100),  # bursty: per-run counts vary far more
])
def test_offered_throughput_matches_input_rate(traffic, iterations):
    cfg = config(nodes_sim="125", sim_time=6 * 3600.0, traffic=traffic)
    runs = [run_iteration(cfg, 125, i).metrics for i in range(iterations)]
    mean_tp = np.mean([throughput(r) for r in runs])
    assert mean_tp == pytest.approx(125 / 900, rel=0.03)


@pytest.mark.slow
def test_success_sanity_and_trend():
    two = config(nodes_sim="2", sim_time=3600.0)
    agg_two = aggregate([run_iteration(two, 2, i).metrics for i in range(20)], n_sim=2)
    assert agg_two.pooled_success >= 0.99

    means, stds = [], []
    for n in (25, 125, 250, 500):
        cfg = config(nodes_sim=str(n), sim_time=3600.0)
        agg = aggregate([run_iteration(cfg, n, i).metrics for i in range(20)], n_sim=n)
        means.append(agg.mean_success)
        stds.append(agg.success_stddev)
    for k in range(len(means) - 1):
        pooled = np.sqrt((stds[k] ** 2 + stds[k + 1] ** 2) / 2)
        assert means[k + 1] <= means[k] + pooled


@pytest.mark.slow
@pytest.mark.parametrize("n", [125, 250, 500])
def test_acrda_decodes_a_superset_of_baseline(n):
    # raised load so the receivers actually differ
    cfg = config(nodes_sim=str(n), sim_time=600.0, mean_interval=60.0)
    base_ok, acrda_ok = [], []
    for i in range(20):
        base = run_iteration(cfg, n, i, receiver="baseline")
        acrda = run_iteration(cfg, n, i, receiver="acrda")
        assert base.metrics.transmitted == acrda.metrics.transmitted
        assert acrda.decoded >= base.decoded
        base_ok.append(base.metrics.succeeded / base.metrics.transmitted)
        acrda_ok.append(acrda.metrics.succeeded / acrda.metrics.transmitted)
    assert np.mean(acrda_ok) >= np.mean(base_ok)


@pytest.mark.slow
def test_acrda_suffers_under_bursty_traffic():
    # offered load near the point where cancellation stops keeping up
    results = {}
    for traffic in ("exponential", "markov2"):
        cfg = config(nodes_sim="500", sim_time=900.0, mean_interval=45.0, receiver="acrda", traffic=traffic)
        results[traffic] = aggregate([run_iteration(cfg, 500, i).metrics for i in range(20)], n_sim=500)
    exp, mk = results["exponential"], results["markov2"]
    pooled = np.sqrt((exp.success_stddev ** 2 + mk.success_stddev ** 2) / 2)
    assert exp.mean_success - mk.mean_success > pooled


@pytest.mark.slow
def test_bursty_traffic_spreads_per_node_success():
    variances = {}
    for traffic in ("exponential", "markov2"):
        cfg = config(nodes_sim="125", sim_time=900.0, mean_interval=15.0, traffic=traffic)
        per_iteration = []
        for i in range(20):
            samples = node_success_samples([run_iteration(cfg, 125, i).metrics])
            per_iteration.append(np.var(samples, ddof=1))
        variances[traffic] = per_iteration
    exp, mk = np.array(variances["exponential"]), np.array(variances["markov2"])
    pooled = np.sqrt((exp.std(ddof=1) ** 2 + mk.std(ddof=1) ** 2) / 2)
    assert mk.mean() - exp.mean() > pooled
