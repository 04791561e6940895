"""Comparison schemes: IEEE 802.15.4 contention-free access and BMAC.

802.15.4-CFP
    All superframe slots are guaranteed time slots handed out by the
    coordinator at each beacon.  Requests reach the coordinator at no cost,
    so a packet is schedulable in the first superframe whose beacon comes
    strictly after its generation.  Two allocation policies exist:

    ``round-robin`` (default)
        Nodes are split over the slots like the proposed scheme and the
        coordinator rotates each slot's GTS through its nodes in a fixed
        order, one node per superframe.  An owner without a packet leaves
        the slot empty.
    ``fifo-pooled``
        One FIFO across the whole cluster; the oldest pending packets get
        slots 0, 1, ... in order, the rest carry over.

BMAC
    Unslotted: CCA for ``cca_us``, then preamble + data as one busy
    interval.  Busy CCA means a uniform backoff in (0, backoff_window] and
    another CCA; collided attempts back off and retry too.  The cluster
    head samples the channel every ``check_interval_us`` and stays awake
    when a sample lands in a preamble.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kernel import PRIO_SENSE, PRIO_SLOT, Channel, EnergyLedger, Simulator, Transmission
from .macbase import MacBase, ProtocolViolation
from .metrics import PacketRecord

GTS_SLOTS = 15
STANDARD_GTS_LIMIT = 7

POLICY_ROUND_ROBIN = "round-robin"
POLICY_FIFO_POOLED = "fifo-pooled"
GTS_POLICIES = (POLICY_ROUND_ROBIN, POLICY_FIFO_POOLED)


class BmacConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GtsRequest:
    node_id: int
    packet_id: int
    gen_time: int


@dataclass(frozen=True)
class GtsSchedule:
    superframe_index: int
    slots: tuple[int | None, ...]
    served: tuple[GtsRequest | None, ...] = ()
    carry_over: tuple[GtsRequest, ...] = ()

    def __post_init__(self) -> None:
        # one owner per slot is implied by the tuple; a node may own several
        if self.served and len(self.served) != len(self.slots):
            raise ValueError("served list must align with slots")

    @property
    def transmissions(self) -> int:
        return sum(r is not None for r in self.served)


def allocate_gts(
    pending: Sequence[GtsRequest], superframe_index: int, max_gts: int = GTS_SLOTS
) -> GtsSchedule:
    """Pooled FIFO allocation: the first ``max_gts`` requests get slots in order."""
    served = list(pending[:max_gts])
    slots = [r.node_id for r in served] + [None] * (max_gts - len(served))
    return GtsSchedule(
        superframe_index,
        tuple(slots),
        tuple(served) + (None,) * (max_gts - len(served)),
        tuple(pending[max_gts:]),
    )


def allocate_gts_round_robin(groups: Sequence[Sequence[int]], superframe_index: int) -> GtsSchedule:
    """Fixed rotation: slot ``s`` belongs to ``groups[s][k mod len]`` in superframe ``k``."""
    slots = tuple(g[superframe_index % len(g)] if g else None for g in groups)
    return GtsSchedule(superframe_index, slots)


class Ieee802154CfpMac(MacBase):
    scheme = "ieee802154-cfp"

    def __init__(
        self,
        sim: Simulator,
        channel: Channel,
        ledger: EnergyLedger,
        groups: Sequence[Sequence[int]],
        superframe_us: int = 120_000,
        tx_duration_us: int = 4000,
        policy: str = POLICY_ROUND_ROBIN,
        max_gts: int = GTS_SLOTS,
        keep_schedules: bool = False,
    ):
        super().__init__(sim, channel, ledger, [n for g in groups for n in g])
        if policy not in GTS_POLICIES:
            raise ValueError(f"unknown GTS policy {policy!r}")
        if not 1 <= max_gts <= GTS_SLOTS:
            raise ValueError("max_gts must be in 1..15")
        if policy == POLICY_ROUND_ROBIN and len(groups) != max_gts:
            raise ValueError("round-robin needs exactly one node group per GTS")
        self.groups = [tuple(g) for g in groups]
        self.superframe_us = superframe_us
        self.slot_us = superframe_us // GTS_SLOTS
        self.tx_duration_us = tx_duration_us
        if tx_duration_us > self.slot_us:
            raise ValueError("packet does not fit in a GTS")
        self.policy = policy
        self.max_gts = max_gts
        self.stop_us: int | None = None
        self.schedules: list[GtsSchedule] | None = [] if keep_schedules else None
        self.max_served = 0
        self._fifo: deque[PacketRecord] = deque()

    def on_packet(self, node_id: int, rec: PacketRecord) -> None:
        self._fifo.append(rec)

    def start(self, stop_us: int | None = None) -> None:
        self.stop_us = stop_us
        self.sim.schedule(0, self._beacon, 0, priority=PRIO_SLOT, action="beacon")

    def _beacon(self, k: int) -> None:
        now = self.sim.now
        if self.policy == POLICY_FIFO_POOLED:
            eligible = []
            for rec in self._fifo:
                if rec.gen_time >= now:
                    break
                eligible.append(GtsRequest(rec.node_id, rec.packet_id, rec.gen_time))
            sched = allocate_gts(eligible, k, self.max_gts)
            by_id = {}
            for _ in range(sched.transmissions):
                rec = self._fifo.popleft()
                by_id[rec.packet_id] = rec
            plan = [(s, by_id[r.packet_id]) for s, r in enumerate(sched.served) if r is not None]
        else:
            sched = allocate_gts_round_robin(self.groups, k)
            plan = []
            for s, owner in enumerate(sched.slots):
                if owner is None:
                    continue
                q = self.queues[owner]
                if q and q[0].gen_time < now:
                    plan.append((s, q[0]))
        if self.schedules is not None:
            self.schedules.append(sched)
        self.max_served = max(self.max_served, len(plan))
        for s, rec in plan:
            self.sim.schedule(now + s * self.slot_us, self._gts_start, rec,
                              priority=PRIO_SENSE, node=rec.node_id, action="gts_start")
        nxt = now + self.superframe_us
        if self.stop_us is None or nxt < self.stop_us:
            self.sim.schedule(nxt, self._beacon, k + 1, priority=PRIO_SLOT, action="beacon")

    def _gts_start(self, rec: PacketRecord) -> None:
        self._transmit(rec.node_id, rec, self.tx_duration_us, self._tx_done)

    def _tx_done(self, tx: Transmission) -> None:
        if tx.collided:
            raise ProtocolViolation(f"collision inside a guaranteed time slot at t={tx.start} us")
        self._attempt_over(tx)


@dataclass(frozen=True)
class BmacConfig:
    check_interval_us: int = 100_000
    preamble_us: int | None = None
    guard_us: int = 5_000
    cca_us: int = 250
    backoff_window_us: int = 10_000

    def __post_init__(self) -> None:
        if self.preamble_us is None:
            object.__setattr__(self, "preamble_us", self.check_interval_us + self.guard_us)
        for name in ("check_interval_us", "preamble_us", "cca_us", "backoff_window_us"):
            if getattr(self, name) <= 0:
                raise BmacConfigError(f"bmac {name} must be positive")
        if self.preamble_us < self.check_interval_us:
            raise BmacConfigError(
                f"bmac preamble ({self.preamble_us} us) shorter than check interval"
                f" ({self.check_interval_us} us): receivers would miss packets"
            )


@dataclass
class BmacReceiver:
    """Cluster-head preamble sampling.  Its own energy is not metered."""

    sim: Simulator
    channel: Channel
    cfg: BmacConfig
    phase_us: int = 0
    samples: int = 0
    wakeups: int = 0
    received: int = 0
    missed: int = 0
    stop_us: int | None = None
    _armed: set = field(default_factory=set)

    def start(self, stop_us: int | None = None) -> None:
        self.stop_us = stop_us
        self.sim.schedule(self.phase_us, self._sample, priority=PRIO_SENSE, action="lpl_sample")

    def _sample(self) -> None:
        now = self.sim.now
        self.samples += 1
        on_air = [t for t in self.channel.active if t.start <= now < t.end]
        if on_air:
            # carrier found: stay awake through the preamble for the data
            self.wakeups += 1
            for t in on_air:
                if now < t.start + self.cfg.preamble_us:
                    self._armed.add(id(t))
        nxt = now + self.cfg.check_interval_us
        if self.stop_us is None or nxt < self.stop_us:
            self.sim.schedule(nxt, self._sample, priority=PRIO_SENSE, action="lpl_sample")

    def transmission_finished(self, tx: Transmission) -> None:
        armed = id(tx) in self._armed
        self._armed.discard(id(tx))
        if tx.collided:
            return
        if armed:
            self.received += 1
        else:
            self.missed += 1


class BmacMac(MacBase):
    scheme = "bmac"

    def __init__(
        self,
        sim: Simulator,
        channel: Channel,
        ledger: EnergyLedger,
        node_ids: Sequence[int],
        cfg: BmacConfig,
        rng_for: Callable[[int], np.random.Generator],
        tx_duration_us: int = 4000,
        receiver_phase_us: int = 0,
    ):
        super().__init__(sim, channel, ledger, node_ids)
        self.cfg = cfg
        self.data_us = tx_duration_us
        self._rngs = {n: rng_for(n) for n in node_ids}
        self._busy_node: set[int] = set()
        self.receiver = BmacReceiver(sim, channel, cfg, receiver_phase_us)
        self.cca_attempts = 0
        self.busy_cca = 0
        self.skipped_retries = 0

    @property
    def airtime_us(self) -> int:
        return self.cfg.preamble_us + self.data_us

    def start(self, stop_us: int | None = None) -> None:
        self.receiver.start(stop_us)

    def on_packet(self, node_id: int, rec: PacketRecord) -> None:
        if node_id not in self._busy_node:
            self._busy_node.add(node_id)
            self._cca(node_id)

    def _cca(self, node: int) -> None:
        self.cca_attempts += 1
        self.sim.schedule_in(self.cfg.cca_us, self._cca_done, node, self.sim.now,
                             priority=PRIO_SENSE, node=node, action="cca_end")

    def _cca_done(self, node: int, started: int) -> None:
        if self.channel.idle_since(started):
            rec = self.queues[node][0]
            self._transmit(node, rec, self.airtime_us, self._tx_done)
        else:
            self.busy_cca += 1
            self._backoff(node)

    def _backoff(self, node: int) -> None:
        rng = self._rngs[node]
        w = self.cfg.backoff_window_us
        t = self.sim.now
        # a retry whose CCA starts inside the current busy period must fail;
        # replay those backoff+CCA cycles without scheduling each one
        busy_until = self.channel.busy_until()
        while True:
            t += int(rng.integers(1, w + 1))
            if t >= busy_until:
                break
            t += self.cfg.cca_us
            self.skipped_retries += 1
            self.cca_attempts += 1
            self.busy_cca += 1
        self.sim.schedule(t, self._cca, node, priority=PRIO_SENSE, node=node, action="backoff_end")

    def _tx_done(self, tx: Transmission) -> None:
        self.receiver.transmission_finished(tx)
        self._attempt_over(tx)
        node = tx.node_id
        if tx.collided:
            self._backoff(node)
        elif self.queues[node]:
            self._cca(node)
        else:
            self._busy_node.discard(node)
