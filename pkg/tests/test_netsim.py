import math
from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from musa.errors import DeploymentError, ParseError, PreconditionError
from musa.netsim import (
    DEFAULT_REPLICATIONS,
    DEFAULT_SWEEPS,
    SWEEP_HEADER,
    Axis,
    Reduction,
    SimConfig,
    area_side,
    build_topology,
    choose_sources,
    config_as_dict,
    deploy,
    experiment_sweep,
    load_sim_config,
    run_simulation,
    sweep_reports,
    values_per_source,
)

ONE_EPOCH = dict(traffic_start=500.0, traffic_end=501.0)


def bfs_oracle(positions, radio_range):
    """Hop distances from node 0 with a plain adjacency-list BFS."""
    m = len(positions)
    adj = [[] for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            if math.dist(positions[i], positions[j]) <= radio_range:
                adj[i].append(j)
                adj[j].append(i)
    dist = [-1] * m
    dist[0] = 0
    q = deque([0])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def two_node():
    return build_topology(np.array([[0.0, 0.0], [50.0, 0.0]]), 50.0)


class TestArea:
    def test_values(self):
        assert area_side(128, 50) == pytest.approx(344.3, abs=0.05)
        assert area_side(1, 50) == pytest.approx(math.sqrt(math.pi * 2500 / 8.4791))
        assert area_side(1, 50) == pytest.approx(30.44, abs=0.01)

    def test_quadrupling_doubles(self):
        assert area_side(512, 50) == pytest.approx(2 * area_side(128, 50))

    def test_rejects_nonpositive(self):
        with pytest.raises(PreconditionError):
            area_side(0, 50)


class TestTopology:
    def test_star(self):
        topo = build_topology([[0, 0], [30, 0], [0, 40]], 50)
        assert list(topo.parent[1:]) == [0, 0]
        assert list(topo.hops) == [0, 1, 1]

    def test_chain(self):
        topo = build_topology([[40.0 * i, 0.0] for i in range(6)], 50)
        assert list(topo.hops) == list(range(6))
        assert topo.path_to_sink(5) == [5, 4, 3, 2, 1, 0]

    def test_lowest_id_parent(self):
        topo = build_topology([[0, 0], [0, 40], [40, 0], [40, 40]], 50)
        assert topo.parent[3] == 1

    def test_deploy_deterministic_and_optimal(self):
        cfg = SimConfig(seed=4)
        a, b = deploy(cfg), deploy(cfg)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.parent, b.parent)
        assert list(a.hops) == bfs_oracle(a.positions.tolist(), cfg.radio_range)
        assert a.area_side == pytest.approx(area_side(128, 50))
        assert np.all(a.positions >= 0) and np.all(a.positions <= a.area_side)

    def test_redraw_cap(self, monkeypatch):
        # a very sparse field is never connected
        monkeypatch.setattr("musa.netsim.DENSITY_CONSTANT", 0.01)
        with pytest.raises(DeploymentError):
            deploy(SimConfig(num_nodes=20, num_sources=1))

    @settings(max_examples=60)
    @given(st.integers(0, 10**6), st.sampled_from([16, 64, 128]))
    def test_tree_invariants(self, seed, nodes):
        topo = deploy(SimConfig(num_nodes=nodes, num_sources=1, seed=seed))
        oracle = bfs_oracle(topo.positions.tolist(), topo.radio_range)
        assert list(topo.hops) == oracle
        for v in range(1, len(topo.positions)):
            u = topo.parent[v]
            assert topo.hops[v] == topo.hops[u] + 1
            assert topo.distance(u, v) <= topo.radio_range
            assert len(topo.path_to_sink(v)) == topo.hops[v] + 1


class TestSources:
    def test_distinct_and_nested(self):
        topo = deploy(SimConfig(seed=2))
        s5, s20 = choose_sources(topo, 5, 2), choose_sources(topo, 20, 2)
        assert len(set(s20)) == 20 and 0 not in s20
        assert s20[:5] == s5

    def test_values_per_source(self):
        assert values_per_source(SimConfig(data_size_n=1024)) == 1024
        assert values_per_source(SimConfig(data_size_n=1024, reduction="half")) == 512
        assert values_per_source(SimConfig(data_size_n=1024, reduction="log2")) == 10


class TestSimulation:
    def test_zero_sources(self):
        rep = run_simulation(deploy(SimConfig()), SimConfig(num_sources=0))
        assert rep.total_energy_J == 0 and rep.packets_generated == 0 and rep.mean_delay_s == 0

    def test_single_packet_closed_form(self):
        cfg = SimConfig(num_sources=1, data_size_n=2, num_variables=2, **ONE_EPOCH)
        k = 2 * 2 * 4 * 8
        rep = run_simulation(two_node(), cfg, sources=[1], reduced_sizes=[2])
        assert rep.packets_generated == rep.packets_delivered == 1
        assert rep.total_energy_J == 2 * cfg.e_elec * k + cfg.eps_amp * k * 2500
        # exact sum, rounded once to the nearest double
        exact = Fraction(k) / Fraction(cfg.bandwidth) + Fraction("0.001")
        assert rep.mean_delay_s == float(exact)
        assert rep.mean_delay_s == pytest.approx(k / cfg.bandwidth + cfg.hop_processing_delay, rel=1e-15)

    def test_fragmentation(self):
        cfg = SimConfig(num_sources=1, data_size_n=3, num_variables=7, **ONE_EPOCH)
        rep = run_simulation(two_node(), cfg, sources=[1], record_events=True)
        # 3 * 7 * 4 = 84 bytes -> 64 + 20
        assert [e.bits for e in rep.events] == [512, 160]

    def test_half_duplex_queueing(self):
        cfg = SimConfig(num_sources=1, data_size_n=32, num_variables=1, **ONE_EPOCH)
        rep = run_simulation(two_node(), cfg, sources=[1], record_events=True)
        air = 512 / cfg.bandwidth
        starts = [e.time_s - 500 for e in rep.events]
        assert starts == pytest.approx([0.0, air])
        assert rep.delays_s == pytest.approx([air + 1e-3, 2 * air + 1e-3])

    def test_two_epochs(self):
        rep = run_simulation(two_node(), SimConfig(num_sources=1, data_size_n=2), sources=[1], record_events=True)
        assert sorted({round(e.time_s) for e in rep.events}) == [500, 560]

    def test_log2_cheaper_than_none(self):
        topo = deploy(SimConfig(seed=3))
        none = run_simulation(topo, SimConfig(seed=3))
        log2 = run_simulation(topo, SimConfig(seed=3, reduction="log2"))
        assert log2.total_energy_J < none.total_energy_J
        assert log2.mean_delay_s < none.mean_delay_s

    def test_source_validation(self):
        topo = two_node()
        with pytest.raises(PreconditionError):
            run_simulation(topo, SimConfig(num_sources=1), sources=[0])
        with pytest.raises(PreconditionError):
            run_simulation(topo, SimConfig(num_sources=1), sources=[1], reduced_sizes=[1, 2])

    @settings(max_examples=1000)
    @given(
        st.integers(0, 10**6),
        st.integers(0, 8),
        st.integers(2, 300),
        st.sampled_from(list(Reduction)),
    )
    def test_conservation_completeness_determinism(self, seed, k, n, reduction):
        cfg = SimConfig(num_nodes=24, num_sources=k, data_size_n=n, reduction=reduction, seed=seed)
        topo = deploy(cfg)
        rep = run_simulation(topo, cfg, record_events=True)
        again = run_simulation(topo, cfg, record_events=True)
        assert rep == again
        events_total = math.fsum(e.tx_energy_J + e.rx_energy_J for e in rep.events)
        assert rep.total_energy_J == pytest.approx(events_total, rel=1e-12, abs=1e-300)
        assert math.fsum(rep.per_node_energy_J) == pytest.approx(rep.total_energy_J, rel=1e-12, abs=1e-300)
        assert min(rep.per_node_energy_J) >= 0
        assert rep.packets_delivered == rep.packets_generated
        # every packet crosses each hop of its source's path exactly once
        if k:
            per_source = rep.packets_generated // k
            assert len(rep.events) == per_source * sum(int(topo.hops[s]) for s in rep.sources)

    @settings(max_examples=300)
    @given(st.integers(0, 10**6), st.integers(2, 2000), st.integers(1, 500))
    def test_monotone_in_payload(self, seed, n, extra):
        cfg = SimConfig(num_nodes=32, num_sources=3, data_size_n=n, seed=seed)
        topo = deploy(cfg)
        a = run_simulation(topo, cfg, record_events=True)
        b = run_simulation(topo, cfg.with_(data_size_n=n + extra), record_events=True)
        assert b.total_energy_J >= a.total_energy_J
        delivered = lambda r: sum(e.bits for e in r.events if e.receiver == 0)  # noqa: E731
        assert delivered(b) >= delivered(a)


class TestConfig:
    def test_defaults(self):
        cfg = SimConfig()
        assert (cfg.radio_range, cfg.bandwidth, cfg.initial_energy) == (50.0, 250_000.0, 100.0)
        assert (cfg.traffic_start, cfg.traffic_end, cfg.data_rate_period, cfg.sim_end) == (500, 600, 60, 1100)

    def test_validation(self):
        with pytest.raises(PreconditionError):
            SimConfig(traffic_end=1200.0)
        with pytest.raises(PreconditionError):
            SimConfig(bandwidth=0.0)

    def test_load(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("# sweep base\nnum_nodes = 256\nreduction = log2\nradio_range = 40.5\n")
        cfg = load_sim_config(path, seed=7)
        assert (cfg.num_nodes, cfg.reduction, cfg.radio_range, cfg.seed) == (256, Reduction.LOG2, 40.5, 7)
        assert config_as_dict(cfg)["reduction"] == "log2"

    def test_load_errors(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("num_nodez = 3\n")
        with pytest.raises(ParseError):
            load_sim_config(path)
        path.write_text("num_nodes = 3\nnum_nodes = 4\n")
        with pytest.raises(ParseError) as info:
            load_sim_config(path)
        assert info.value.line == 2


class TestSweep:
    def test_default_axes(self):
        assert DEFAULT_SWEEPS[Axis.DATA_SIZE] == (256, 512, 1024, 2048)
        assert DEFAULT_SWEEPS[Axis.NUM_NODES] == (128, 256, 512, 1024)
        assert DEFAULT_SWEEPS[Axis.NUM_SOURCES] == (1, 5, 10, 20)
        assert DEFAULT_REPLICATIONS == 30

    def test_single_row(self):
        rows = experiment_sweep(SimConfig(), "data_size", [256], ["none"], replications=2)
        assert len(rows) == 1 and len(rows[0].as_csv()) == len(SWEEP_HEADER)
        assert rows[0].packets_generated == rows[0].packets_delivered == 2 * 5 * 2 * 48

    def test_per_seed_energy_ordering(self):
        reports = sweep_reports(SimConfig(), Axis.DATA_SIZE, [256, 1024], replications=5)
        for v in (256, 1024):
            for s in range(5):
                e = [reports[(v, r)][s].total_energy_J for r in Reduction]
                assert e[0] >= e[1] >= e[2]

    def test_empty_values(self):
        with pytest.raises(PreconditionError):
            experiment_sweep(SimConfig(), "num_nodes", [], replications=1)
