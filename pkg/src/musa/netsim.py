"""Discrete-event simulation of a flat sensor network draining to one sink.

Nodes are dropped uniformly on a square whose side keeps the node density
constant, a BFS shortest-path tree is built once from the sink at the
origin, and source nodes push their (possibly reduced) windows up the tree
as fixed-payload packets.

Model in brief:

* each hop costs the sender ``e_elec k + eps_amp k d^2`` and the receiver
  ``e_elec k`` for a ``k``-bit packet over ``d`` metres;
* a node sends one packet at a time from an unbounded FIFO queue; a hop
  takes ``k / bandwidth`` on air plus ``hop_processing_delay`` at the
  receiver before the packet can be forwarded;
* no MAC contention, no losses, no energy depletion.

The clock counts integer nanoseconds so that delays are exact sums of hop
latencies.
"""

from __future__ import annotations

import enum
import heapq
import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .configfile import read_key_values
from .errors import DeploymentError, ParseError, PreconditionError
from .experiments import mean_ci
from .sampler import reduction_level

__all__ = [
    "Reduction",
    "Axis",
    "SimConfig",
    "Topology",
    "HopEvent",
    "SimReport",
    "SweepRow",
    "area_side",
    "build_topology",
    "deploy",
    "choose_sources",
    "values_per_source",
    "run_simulation",
    "sweep_reports",
    "experiment_sweep",
    "load_sim_config",
    "SWEEP_HEADER",
    "DEFAULT_SWEEPS",
    "DENSITY_CONSTANT",
    "TICKS_PER_SECOND",
]

DENSITY_CONSTANT = 8.4791
TICKS_PER_SECOND = 1_000_000_000
MAX_REDRAWS = 100
DEFAULT_REPLICATIONS = 30

SWEEP_HEADER = (
    "axis_value",
    "reduction",
    "mean_energy_J",
    "ci_energy_J",
    "mean_delay_s",
    "ci_delay_s",
    "packets_generated",
    "packets_delivered",
)


class Reduction(str, enum.Enum):
    NONE = "none"
    HALF = "half"
    LOG2 = "log2"

    @classmethod
    def parse(cls, value: "Reduction | str") -> "Reduction":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise PreconditionError(f"unknown reduction {value!r}")


class Axis(str, enum.Enum):
    DATA_SIZE = "data_size"
    NUM_NODES = "num_nodes"
    NUM_SOURCES = "num_sources"

    @classmethod
    def parse(cls, value: "Axis | str") -> "Axis":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise PreconditionError(f"unknown sweep axis {value!r}")

    @property
    def field_name(self) -> str:
        return {"data_size": "data_size_n", "num_nodes": "num_nodes", "num_sources": "num_sources"}[self.value]


DEFAULT_SWEEPS: dict[Axis, tuple[int, ...]] = {
    Axis.DATA_SIZE: (256, 512, 1024, 2048),
    Axis.NUM_NODES: (128, 256, 512, 1024),
    Axis.NUM_SOURCES: (1, 5, 10, 20),
}


@dataclass(frozen=True)
class SimConfig:
    num_nodes: int = 128
    num_sources: int = 5
    data_size_n: int = 256
    reduction: Reduction = Reduction.NONE
    radio_range: float = 50.0
    bandwidth: float = 250_000.0
    traffic_start: float = 500.0
    traffic_end: float = 600.0
    data_rate_period: float = 60.0
    sim_end: float = 1100.0
    initial_energy: float = 100.0
    num_variables: int = 3
    bytes_per_value: int = 4
    payload_bytes_per_packet: int = 64
    e_elec: float = 50e-9
    eps_amp: float = 100e-12
    hop_processing_delay: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "reduction", Reduction.parse(self.reduction))
        if self.num_nodes < 1 or self.num_sources < 0 or self.num_sources > self.num_nodes:
            raise PreconditionError("need num_nodes >= 1 and 0 <= num_sources <= num_nodes")
        if self.data_size_n < 2:
            raise PreconditionError("data_size_n must be >= 2")
        positive = (
            "radio_range", "bandwidth", "data_rate_period", "sim_end", "initial_energy",
            "num_variables", "bytes_per_value", "payload_bytes_per_packet", "e_elec", "eps_amp",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise PreconditionError(f"{name} must be positive")
        if self.hop_processing_delay < 0 or self.traffic_start < 0:
            raise PreconditionError("delays and start times must be non-negative")
        if not self.traffic_start < self.traffic_end <= self.sim_end:
            raise PreconditionError("need traffic_start < traffic_end <= sim_end")

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def load_sim_config(path: str | Path, **overrides) -> SimConfig:
    """Read a flat ``key = value`` file whose keys are :class:`SimConfig` fields."""
    raw = read_key_values(path)
    kinds = {f.name: f.type for f in fields(SimConfig)}
    values: dict[str, object] = {}
    for key, text in raw.items():
        if key not in kinds:
            raise ParseError(f"unknown config key {key!r}")
        default = getattr(SimConfig(), key)
        try:
            if isinstance(default, Reduction):
                values[key] = Reduction.parse(text)
            elif isinstance(default, int) and not isinstance(default, bool):
                values[key] = int(text)
            else:
                values[key] = float(text)
        except (ValueError, PreconditionError) as exc:
            raise ParseError(f"bad value for {key}: {exc}") from None
    values.update(overrides)
    return SimConfig(**values)


def area_side(num_nodes: int, radio_range: float) -> float:
    """Side of the square area that keeps density at ``DENSITY_CONSTANT``."""
    if num_nodes <= 0 or radio_range <= 0:
        raise PreconditionError("num_nodes and radio_range must be positive")
    return math.sqrt(math.pi * radio_range**2 * num_nodes / DENSITY_CONSTANT)


@dataclass(frozen=True)
class Topology:
    """Positions (row 0 is the sink at the origin) and the routing tree."""

    positions: np.ndarray
    radio_range: float
    area_side: float
    neighbors: tuple[tuple[int, ...], ...]
    parent: np.ndarray
    hops: np.ndarray
    sink: int = 0
    seed: int | None = None

    @property
    def num_nodes(self) -> int:
        """Sensor nodes, excluding the sink."""
        return len(self.positions) - 1

    def distance(self, u: int, v: int) -> float:
        du = self.positions[u] - self.positions[v]
        return math.hypot(du[0], du[1])

    def path_to_sink(self, node: int) -> list[int]:
        path = [node]
        while path[-1] != self.sink:
            path.append(int(self.parent[path[-1]]))
        return path


def build_topology(
    positions: Sequence[Sequence[float]] | np.ndarray,
    radio_range: float,
    area: float | None = None,
    seed: int | None = None,
) -> Topology:
    """Unit-disk graph and BFS tree over ``positions`` (index 0 is the sink).

    A node's parent is its lowest-id neighbour one hop closer to the sink.
    Unreachable nodes keep hop ``-1`` and parent ``-1``.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2 or len(pos) < 1:
        raise PreconditionError("positions must be a non-empty (m, 2) array")
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    adjacent = dist <= radio_range
    np.fill_diagonal(adjacent, False)
    neighbors = tuple(tuple(int(v) for v in np.flatnonzero(row)) for row in adjacent)

    m = len(pos)
    hops = np.full(m, -1, dtype=int)
    hops[0] = 0
    frontier = deque([0])
    while frontier:
        u = frontier.popleft()
        for v in neighbors[u]:
            if hops[v] < 0:
                hops[v] = hops[u] + 1
                frontier.append(v)
    parent = np.full(m, -1, dtype=int)
    for v in range(1, m):
        if hops[v] > 0:
            parent[v] = min(u for u in neighbors[v] if hops[u] == hops[v] - 1)
    if area is None:
        area = float(pos.max()) if m > 1 else 0.0
    return Topology(pos, float(radio_range), float(area), neighbors, parent, hops, 0, seed)


def deploy(config: SimConfig) -> Topology:
    """Uniform random deployment, redrawn (seed + 1, + 2, ...) until connected."""
    side = area_side(config.num_nodes, config.radio_range)
    for attempt in range(MAX_REDRAWS):
        seed = config.seed + attempt
        rng = np.random.default_rng(seed)
        nodes = rng.uniform(0.0, side, size=(config.num_nodes, 2))
        topo = build_topology(np.vstack([[0.0, 0.0], nodes]), config.radio_range, side, seed)
        if (topo.hops >= 0).all():
            return topo
    raise DeploymentError(
        f"no connected deployment of {config.num_nodes} nodes in {MAX_REDRAWS} draws"
    )


def choose_sources(topology: Topology, num_sources: int, seed: int) -> list[int]:
    """Distinct non-sink nodes; a larger count extends a smaller one's set."""
    if num_sources > topology.num_nodes:
        raise PreconditionError("more sources than nodes")
    rng = np.random.default_rng([seed, 1])
    order = rng.permutation(np.arange(1, topology.num_nodes + 1))
    return [int(v) for v in order[:num_sources]]


def values_per_source(config: SimConfig) -> int:
    """Observations (rows) each source sends per epoch under ``config.reduction``."""
    if config.reduction is Reduction.NONE:
        return config.data_size_n
    return reduction_level(config.data_size_n, config.reduction.value)


@dataclass(frozen=True)
class HopEvent:
    time_s: float
    sender: int
    receiver: int
    bits: int
    tx_energy_J: float
    rx_energy_J: float


@dataclass
class SimReport:
    total_energy_J: float
    mean_delay_s: float
    packets_generated: int
    packets_delivered: int
    per_node_energy_J: list[float]
    sources: list[int] = field(default_factory=list)
    delays_s: list[float] = field(default_factory=list)
    events: list[HopEvent] | None = None


def _ticks(seconds: float) -> int:
    return int(math.ceil(seconds * TICKS_PER_SECOND - 1e-6))


def run_simulation(
    topology: Topology,
    config: SimConfig,
    reduced_sizes: Mapping[int, int] | Sequence[int] | None = None,
    sources: Sequence[int] | None = None,
    record_events: bool = False,
) -> SimReport:
    """Push every source's data to the sink and account energy and delay.

    ``sources`` defaults to :func:`choose_sources` with ``config.seed``.
    ``reduced_sizes`` gives the number of observations each source sends
    per epoch (a mapping by node id or a sequence aligned with ``sources``);
    by default every source sends :func:`values_per_source`.
    """
    if sources is None:
        sources = choose_sources(topology, config.num_sources, config.seed)
    sources = [int(s) for s in sources]
    if len(set(sources)) != len(sources):
        raise PreconditionError("sources must be distinct")
    for s in sources:
        if not 1 <= s <= topology.num_nodes:
            raise PreconditionError(f"source {s} is not a sensor node")
        if topology.hops[s] < 0:
            raise AssertionError(f"source {s} has no route to the sink")

    if reduced_sizes is None:
        counts = {s: values_per_source(config) for s in sources}
    elif isinstance(reduced_sizes, Mapping):
        counts = {s: int(reduced_sizes[s]) for s in sources}
    else:
        if len(reduced_sizes) != len(sources):
            raise PreconditionError("reduced_sizes must align with sources")
        counts = {s: int(c) for s, c in zip(sources, reduced_sizes)}

    payload_bits = config.payload_bytes_per_packet * 8
    tx_ticks_per_bit = TICKS_PER_SECOND / config.bandwidth
    proc_ticks = _ticks(config.hop_processing_delay)
    end_tick = _ticks(config.sim_end)
    epoch_ticks = []
    t = config.traffic_start
    k = 0
    while t < config.traffic_end:
        epoch_ticks.append(_ticks(t))
        k += 1
        t = config.traffic_start + k * config.data_rate_period

    m = len(topology.positions)
    energy = np.zeros(m)
    events: list[HopEvent] | None = [] if record_events else None
    # heap entries: (tick, seq, kind, node, packet); packet = [created_tick, bits]
    heap: list = []
    seq = 0
    generated = 0
    for tick in epoch_ticks:
        for s in sources:
            total_bits = counts[s] * config.num_variables * config.bytes_per_value * 8
            while total_bits > 0:
                bits = min(payload_bits, total_bits)
                total_bits -= bits
                heapq.heappush(heap, (tick, seq, 0, s, (tick, bits)))
                seq += 1
                generated += 1

    queues: list[deque] = [deque() for _ in range(m)]
    busy = [False] * m
    delays: list[int] = []

    def start(node: int, now: int) -> None:
        nonlocal seq
        packet = queues[node].popleft()
        bits = packet[1]
        receiver = int(topology.parent[node])
        d = topology.distance(node, receiver)
        tx_e = config.e_elec * bits + config.eps_amp * bits * d * d
        rx_e = config.e_elec * bits
        energy[node] += tx_e
        energy[receiver] += rx_e
        if events is not None:
            events.append(HopEvent(now / TICKS_PER_SECOND, node, receiver, bits, tx_e, rx_e))
        air = int(math.ceil(bits * tx_ticks_per_bit - 1e-6))
        busy[node] = True
        heapq.heappush(heap, (now + air, seq, 1, node, None))
        seq += 1
        heapq.heappush(heap, (now + air + proc_ticks, seq, 0, receiver, packet))
        seq += 1

    while heap:
        now, _, kind, node, packet = heapq.heappop(heap)
        if now > end_tick:
            break
        if kind == 0:
            if node == topology.sink:
                delays.append(now - packet[0])
                continue
            queues[node].append(packet)
            if not busy[node]:
                start(node, now)
        else:
            busy[node] = False
            if queues[node]:
                start(node, now)

    mean_delay = float(np.mean(delays)) / TICKS_PER_SECOND if delays else 0.0
    return SimReport(
        total_energy_J=float(energy.sum()),
        mean_delay_s=mean_delay,
        packets_generated=generated,
        packets_delivered=len(delays),
        per_node_energy_J=energy.tolist(),
        sources=sources,
        delays_s=[d / TICKS_PER_SECOND for d in delays],
        events=events,
    )


@dataclass(frozen=True)
class SweepRow:
    axis_value: int
    reduction: Reduction
    mean_energy_J: float
    ci_energy_J: float
    mean_delay_s: float
    ci_delay_s: float
    packets_generated: int
    packets_delivered: int

    def as_csv(self) -> list[str]:
        return [
            str(self.axis_value),
            self.reduction.value,
            repr(self.mean_energy_J),
            repr(self.ci_energy_J),
            repr(self.mean_delay_s),
            repr(self.ci_delay_s),
            str(self.packets_generated),
            str(self.packets_delivered),
        ]


def sweep_reports(
    base: SimConfig,
    axis: Axis | str,
    values: Iterable[int],
    reductions: Iterable[Reduction | str] = (Reduction.NONE, Reduction.HALF, Reduction.LOG2),
    replications: int = DEFAULT_REPLICATIONS,
    record_events: bool = False,
) -> dict[tuple[int, Reduction], list[SimReport]]:
    """Per-seed reports for every (value, reduction); seed ``r`` is ``base.seed + r``.

    Within one seed the topology and source set are shared by all
    reductions (and by all values unless the axis is the node count), so
    results can be compared seed by seed.
    """
    axis = Axis.parse(axis)
    values = [int(v) for v in values]
    reductions = [Reduction.parse(r) for r in reductions]
    if not values:
        raise PreconditionError("sweep needs at least one value")
    if replications < 1:
        raise PreconditionError("replications must be >= 1")
    out: dict[tuple[int, Reduction], list[SimReport]] = {(v, r): [] for v in values for r in reductions}
    topologies: dict[tuple[int, int], Topology] = {}
    for rep in range(replications):
        for value in values:
            cfg = base.with_(seed=base.seed + rep, **{axis.field_name: value})
            key = (cfg.num_nodes, cfg.seed)
            if key not in topologies:
                topologies[key] = deploy(cfg)
            topo = topologies[key]
            for reduction in reductions:
                out[(value, reduction)].append(
                    run_simulation(topo, cfg.with_(reduction=reduction), record_events=record_events)
                )
        if axis is not Axis.NUM_NODES:
            topologies.clear()
    return out


def experiment_sweep(
    base: SimConfig,
    axis: Axis | str,
    values: Iterable[int],
    reductions: Iterable[Reduction | str] = (Reduction.NONE, Reduction.HALF, Reduction.LOG2),
    replications: int = DEFAULT_REPLICATIONS,
) -> list[SweepRow]:
    """Mean and 95 % normal-approximation CI of energy and delay per sweep point.

    Packet counts are totals over all replications.
    """
    reports = sweep_reports(base, axis, values, reductions, replications)
    rows = []
    for (value, reduction), reps in reports.items():
        e_mean, e_ci = mean_ci([r.total_energy_J for r in reps])
        d_mean, d_ci = mean_ci([r.mean_delay_s for r in reps])
        rows.append(
            SweepRow(
                value, reduction, e_mean, e_ci, d_mean, d_ci,
                sum(r.packets_generated for r in reps),
                sum(r.packets_delivered for r in reps),
            )
        )
    return rows


def config_as_dict(config: SimConfig) -> dict[str, object]:
    d = asdict(config)
    d["reduction"] = config.reduction.value
    return d
