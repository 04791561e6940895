"""Packet generation: fixed-interval and event-driven (Poisson) sources."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .kernel import MS, RunSeed

FIXED_INTERVALS_MS = (400, 800, 1200, 1600)
RANDOM_INTERVALS_MS = (1000, 2000, 3000, 4000)
SLOTS_PER_SUPERFRAME = 15
DEFAULT_SWEEP_NODES_PER_SLOT = (3, 6, 9, 12)

FIXED = "fixed"
RANDOM = "random"


@dataclass(frozen=True)
class PacketSpec:
    size_bytes: int = 50
    rate_bps: int = 100_000

    @property
    def tx_duration_us(self) -> int:
        bits_us = self.size_bytes * 8 * 1_000_000
        if bits_us % self.rate_bps:
            raise ValueError("packet airtime is not a whole number of microseconds")
        return bits_us // self.rate_bps


@dataclass(frozen=True)
class TrafficProfile:
    kind: str
    interval_ms: float
    phase_offset_us: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (FIXED, RANDOM):
            raise ValueError(f"unknown traffic kind {self.kind!r}")
        if not self.interval_ms > 0:
            raise ValueError("interval_ms must be > 0")
        if self.phase_offset_us < 0:
            raise ValueError("phase offset must be >= 0")

    @property
    def interval_us(self) -> int:
        return round(self.interval_ms * MS)

    def in_table(self) -> bool:
        table = FIXED_INTERVALS_MS if self.kind == FIXED else RANDOM_INTERVALS_MS
        return self.interval_ms in table


def fixed_arrivals(profile: TrafficProfile, horizon_us: int) -> list[int]:
    """Arrivals at ``offset + k*interval`` for every k with time <= horizon."""
    if profile.kind != FIXED:
        raise ValueError("fixed_arrivals needs a fixed profile")
    return list(range(profile.phase_offset_us, int(horizon_us) + 1, profile.interval_us))


def random_arrivals(
    profile: TrafficProfile, seed: int | np.random.Generator, horizon_us: int
) -> list[int]:
    """Poisson arrivals on (0, horizon] with mean gap ``interval_ms``.

    Gaps are drawn exponentially and rounded to whole microseconds with a
    floor of 1 us, which keeps the sequence strictly increasing.
    """
    if profile.kind != RANDOM:
        raise ValueError("random_arrivals needs a random profile")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mean = profile.interval_ms * MS
    out: list[int] = []
    t = 0
    batch = max(16, int(horizon_us / mean * 1.2) + 16)
    while True:
        gaps = np.maximum(1, np.rint(rng.exponential(mean, size=batch)).astype(np.int64))
        times = t + np.cumsum(gaps)
        keep = times[times <= horizon_us]
        out.extend(int(x) for x in keep)
        if len(keep) < batch:
            return out
        t = int(times[-1])


def _parse_ratio(ratio) -> tuple[int, int]:
    if isinstance(ratio, str):
        a, _, b = ratio.partition(":")
        ratio = (int(a), int(b))
    a, b = (int(x) for x in ratio)
    if a < 0 or b < 0 or a + b == 0:
        raise ValueError(f"bad ratio {ratio!r}")
    return a, b


def format_ratio(ratio: tuple[int, int]) -> str:
    return f"{ratio[0]}:{ratio[1]}"


@dataclass(frozen=True)
class PopulationMix:
    """Per-slot traffic mix.

    ``entry`` (1-4) picks the fixed and random intervals from the table
    row of the same index.  Free-form runs may override the intervals.
    """

    nodes_per_slot: int
    ratio: tuple[int, int] = (2, 1)
    entry: int = 3
    slots: int = SLOTS_PER_SUPERFRAME
    fixed_interval_ms: float | None = None
    random_interval_ms: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratio", _parse_ratio(self.ratio))
        if self.nodes_per_slot < 1:
            raise ValueError("nodes_per_slot must be >= 1")
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        if not 1 <= self.entry <= len(FIXED_INTERVALS_MS):
            raise ValueError(f"entry must be in 1..{len(FIXED_INTERVALS_MS)}")
        if self.nodes_per_slot % sum(self.ratio):
            raise ValueError(
                f"ratio {format_ratio(self.ratio)} does not divide {self.nodes_per_slot} nodes per slot"
            )

    @property
    def fixed_count(self) -> int:
        return self.nodes_per_slot * self.ratio[0] // sum(self.ratio)

    @property
    def random_count(self) -> int:
        return self.nodes_per_slot - self.fixed_count

    @property
    def total_nodes(self) -> int:
        return self.nodes_per_slot * self.slots

    @property
    def fixed_ms(self) -> float:
        return self.fixed_interval_ms or FIXED_INTERVALS_MS[self.entry - 1]

    @property
    def random_ms(self) -> float:
        return self.random_interval_ms or RANDOM_INTERVALS_MS[self.entry - 1]

    @property
    def uses_table(self) -> bool:
        return self.fixed_interval_ms is None and self.random_interval_ms is None


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    slot: int
    local_index: int
    profile: TrafficProfile


@dataclass(frozen=True)
class Population:
    mix: PopulationMix
    nodes: tuple[NodeSpec, ...]
    groups: tuple[tuple[int, ...], ...] = field(repr=False)

    def by_slot(self, slot: int) -> list[NodeSpec]:
        return [self.nodes[i] for i in self.groups[slot]]


def build_population(mix: PopulationMix, seed: RunSeed | int = 0, repetition: int = 0) -> Population:
    """Number nodes consecutively; node ``i`` sits in slot ``i mod slots``.

    Within each slot the first ``fixed_count`` members are periodic.
    Periodic phase offsets are uniform in [0, interval) from a per-node
    substream, so the population is a pure function of (mix, seed).
    """
    rs = seed if isinstance(seed, RunSeed) else RunSeed(int(seed))
    nodes = []
    for node_id in range(mix.total_nodes):
        slot, local = node_id % mix.slots, node_id // mix.slots
        if local < mix.fixed_count:
            iv_us = round(mix.fixed_ms * MS)
            offset = int(rs.stream("phase", node_id, repetition).integers(0, iv_us))
            profile = TrafficProfile(FIXED, mix.fixed_ms, offset)
        else:
            profile = TrafficProfile(RANDOM, mix.random_ms)
        nodes.append(NodeSpec(node_id, slot, local, profile))
    groups = tuple(tuple(range(s, mix.total_nodes, mix.slots)) for s in range(mix.slots))
    return Population(mix, tuple(nodes), groups)


def generate_arrivals(
    population: Population, seed: RunSeed | int, horizon_us: int, repetition: int = 0
) -> dict[int, list[int]]:
    rs = seed if isinstance(seed, RunSeed) else RunSeed(int(seed))
    out = {}
    for n in population.nodes:
        if n.profile.kind == FIXED:
            out[n.node_id] = fixed_arrivals(n.profile, horizon_us)
        else:
            out[n.node_id] = random_arrivals(n.profile, rs.stream("traffic", n.node_id, repetition), horizon_us)
    return out


def arrivals_digest(arrivals: dict[int, Sequence[int]]) -> str:
    h = hashlib.sha256()
    for node_id in sorted(arrivals):
        h.update(f"{node_id}:".encode())
        h.update(np.asarray(arrivals[node_id], dtype=np.int64).tobytes())
    return h.hexdigest()


def _aggregate_rate(mix: PopulationMix) -> Fraction:
    # packets per millisecond, exact
    per_slot = Fraction(mix.fixed_count) / Fraction(str(mix.fixed_ms)) + Fraction(mix.random_count) / Fraction(
        str(mix.random_ms)
    )
    return per_slot * mix.slots


def channel_utilization(mix: PopulationMix, packet: PacketSpec = PacketSpec()) -> float:
    """Aggregate packet rate times per-packet airtime."""
    return float(_aggregate_rate(mix) * Fraction(packet.tx_duration_us, MS))


def per_slot_load(mix: PopulationMix, superframe_ms: float = 120) -> float:
    """Expected packets arriving per slot per superframe (must stay < 1)."""
    return float(_aggregate_rate(mix) / mix.slots * Fraction(str(superframe_ms)))
