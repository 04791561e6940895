"""Slotted carrier sensing with autonomous virtual-queue rotation.

Every slot of the superframe is shared by ``N`` nodes that agree on a
virtual queue (a permutation of their ids).  At slot start a backlogged
node at queue position ``p`` listens for ``(p - 1) * w1`` and transmits if
the channel stayed idle; the first such node wins the slot, moves to the
tail and everybody behind it moves up one place.  Nobody announces the
new order: each node rebuilds it from the offset at which it heard the
winner start, so all local views stay identical without signalling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Container, Mapping, Sequence

from .kernel import PRIO_SENSE, PRIO_SLOT, PRIO_SLOT_END, Channel, EnergyLedger, Simulator, Transmission
from .macbase import MacBase, ProtocolViolation


class InfeasibleSlotConfig(ValueError):
    pass


@dataclass(frozen=True)
class SlotConfig:
    nodes_per_slot: int
    slots_per_superframe: int = 15
    superframe_us: int = 120_000
    w1_us: int = 250
    tx_duration_us: int = 4000

    def __post_init__(self) -> None:
        if self.nodes_per_slot < 1:
            raise ValueError("nodes_per_slot must be >= 1")
        if self.slots_per_superframe < 1 or self.w1_us <= 0 or self.tx_duration_us <= 0:
            raise ValueError("slot parameters must be positive")
        if self.superframe_us % self.slots_per_superframe:
            raise ValueError("superframe must split into whole-microsecond slots")

    @property
    def slot_duration_us(self) -> int:
        return self.superframe_us // self.slots_per_superframe

    @property
    def last_window_us(self) -> int:
        return (self.nodes_per_slot - 1) * self.w1_us

    def feasibility_error(self) -> str | None:
        need = self.last_window_us + self.tx_duration_us
        if need > self.slot_duration_us:
            return (
                f"infeasible slot: last window {self.last_window_us} us + packet {self.tx_duration_us} us"
                f" = {need} us exceeds slot of {self.slot_duration_us} us"
                f" (N={self.nodes_per_slot}, w1={self.w1_us} us)"
            )
        return None

    def check_feasible(self) -> None:
        err = self.feasibility_error()
        if err:
            raise InfeasibleSlotConfig(err)


@dataclass(frozen=True)
class VirtualQueue:
    """Transmission precedence inside one slot; index 0 is head of line."""

    order: tuple[int, ...]

    def __post_init__(self) -> None:
        order = tuple(self.order)
        object.__setattr__(self, "order", order)
        if not order:
            raise ValueError("virtual queue cannot be empty")
        if len(set(order)) != len(order):
            raise ValueError("virtual queue must be a permutation (duplicate id)")

    def __len__(self) -> int:
        return len(self.order)

    def position(self, node_id: int) -> int:
        """1-based queue position."""
        return self.order.index(node_id) + 1


@dataclass(frozen=True)
class LocalView:
    owner: int
    queue: VirtualQueue

    @property
    def position(self) -> int:
        return self.queue.position(self.owner)


def window_duration(position: int, cfg: SlotConfig) -> int:
    if not 1 <= position <= cfg.nodes_per_slot:
        raise ValueError(f"position {position} outside 1..{cfg.nodes_per_slot}")
    return (position - 1) * cfg.w1_us


def _has(backlog: Mapping[int, bool] | Container[int], node: int) -> bool:
    if isinstance(backlog, Mapping):
        return bool(backlog.get(node, False))
    return node in backlog


def resolve_slot(
    queue: VirtualQueue, backlog: Mapping[int, bool] | Container[int], w1_us: int = 250
) -> tuple[int, int] | None:
    """Winner of one slot instance as ``(node_id, start_offset_us)``, or None."""
    for idx, node in enumerate(queue.order):
        if _has(backlog, node):
            return node, idx * w1_us
    return None


def rotate(queue: VirtualQueue, winner_position: int) -> VirtualQueue:
    order = queue.order
    if not 1 <= winner_position <= len(order):
        raise ValueError(f"winner position {winner_position} outside 1..{len(order)}")
    k = winner_position - 1
    return VirtualQueue(order[:k] + order[k + 1 :] + (order[k],))


SlotOutcome = tuple[int, int] | None  # (transmitter, offset from slot start) or idle


def observe_and_update(view: LocalView, outcome: SlotOutcome, w1_us: int = 250) -> LocalView:
    """Apply one observed slot to a node's private copy of the queue.

    The winner's position is inferred from when its carrier appeared; the
    transmitter id must agree with that position.
    """
    if outcome is None:
        return view
    node, offset = outcome
    if node not in view.queue.order:
        raise ProtocolViolation(f"node {view.owner}: transmitter {node} is not in its queue")
    if offset % w1_us:
        raise ProtocolViolation(f"node {view.owner}: carrier at {offset} us is off the window grid")
    pos = offset // w1_us + 1
    if pos > len(view.queue) or view.queue.order[pos - 1] != node:
        raise ProtocolViolation(f"node {view.owner}: {node} transmitted from position {pos} out of turn")
    return LocalView(view.owner, rotate(view.queue, pos))


class ProposedMac(MacBase):
    """Event-driven node state machines for every slot of one cluster.

    ``groups[s]`` lists the node ids sharing slot ``s``; their initial
    queue is ascending id unless ``initial_orders`` overrides it.
    The MAC also keeps a reference queue per slot (not used for decisions)
    and checks after every slot that all local views agree with it.
    """

    scheme = "proposed"

    def __init__(
        self,
        sim: Simulator,
        channel: Channel,
        ledger: EnergyLedger,
        cfg: SlotConfig,
        groups: Sequence[Sequence[int]],
        initial_orders: Mapping[int, Sequence[int]] | None = None,
        queue_trace: list | None = None,
        check_views: bool = True,
    ):
        nodes = [n for g in groups for n in g]
        super().__init__(sim, channel, ledger, nodes)
        if len(groups) != cfg.slots_per_superframe:
            raise ValueError("need one node group per slot")
        for g in groups:
            if len(g) > cfg.nodes_per_slot:
                raise ValueError("slot group larger than nodes_per_slot")
        cfg.check_feasible()
        self.cfg = cfg
        self.groups = [tuple(g) for g in groups]
        self.reference: list[VirtualQueue | None] = []
        self.views: dict[int, LocalView] = {}
        for s, g in enumerate(self.groups):
            if not g:
                self.reference.append(None)
                continue
            order = tuple(initial_orders[s]) if initial_orders and s in initial_orders else tuple(sorted(g))
            if sorted(order) != sorted(g):
                raise ValueError(f"initial order for slot {s} is not a permutation of its nodes")
            q = VirtualQueue(order)
            self.reference.append(q)
            for n in g:
                self.views[n] = LocalView(n, q)
        self.queue_trace = queue_trace
        self.check_views = check_views
        self.stop_us: int | None = None
        self.slots_run = 0
        self.busy_slots = 0
        self.view_mismatches = 0
        self.wasted_slots = 0  # backlog present but nobody transmitted
        self.transmissions: list[tuple[int, int, int]] = []  # (global slot index, slot, node)
        self._sensing: dict[int, list] = {}
        self._slot_tx: dict[int, tuple[int, int]] = {}
        self._slot_backlog: dict[int, bool] = {}

    def start(self, stop_us: int | None = None, first_superframe: int = 0) -> None:
        self.stop_us = stop_us
        t0 = first_superframe * self.cfg.superframe_us
        for s, g in enumerate(self.groups):
            if g:
                self.sim.schedule(
                    t0 + s * self.cfg.slot_duration_us, self._slot_start, s, first_superframe,
                    priority=PRIO_SLOT, action=f"slot{s}_start",
                )

    def _slot_start(self, slot: int, sf: int) -> None:
        now = self.sim.now
        w1 = self.cfg.w1_us
        sensing = []
        for node in self.groups[slot]:
            q = self.queues[node]
            # eligibility: generated strictly before slot start
            if q and q[0].gen_time < now:
                wait = (self.views[node].position - 1) * w1
                sensing.append(
                    self.sim.schedule(now + wait, self._window_done, slot, node, now,
                                      priority=PRIO_SENSE, node=node, action="sense_end")
                )
        self._sensing[slot] = sensing
        self._slot_backlog[slot] = bool(sensing)
        self.sim.schedule(now + self.cfg.slot_duration_us, self._slot_end, slot, sf, now,
                          priority=PRIO_SLOT_END, action=f"slot{slot}_end")
        nxt = now + self.cfg.superframe_us
        if self.stop_us is None or nxt < self.stop_us:
            self.sim.schedule(nxt, self._slot_start, slot, sf + 1, priority=PRIO_SLOT, action=f"slot{slot}_start")

    def _window_done(self, slot: int, node: int, slot_start: int) -> None:
        if not self.channel.idle_since(slot_start):
            return  # carrier heard during the window: defer to next occurrence
        rec = self.queues[node][0]
        self._transmit(node, rec, self.cfg.tx_duration_us, self._tx_done)
        self._slot_tx[slot] = (node, self.sim.now - slot_start)
        # every other contender hears the carrier and drops out for this slot
        for ev in self._sensing.get(slot, ()):
            self.sim.cancel(ev)

    def _tx_done(self, tx: Transmission) -> None:
        if tx.collided:
            raise ProtocolViolation(f"collision in proposed scheme at t={tx.start} us (node {tx.node_id})")
        self._attempt_over(tx)

    def _slot_end(self, slot: int, sf: int, slot_start: int) -> None:
        outcome = self._slot_tx.pop(slot, None)
        self._sensing.pop(slot, None)
        backlog = self._slot_backlog.pop(slot, False)
        before = self.reference[slot]
        self.slots_run += 1
        index = sf * self.cfg.slots_per_superframe + slot
        if outcome is not None:
            self.busy_slots += 1
            self.transmissions.append((index, slot, outcome[0]))
            self.reference[slot] = rotate(before, before.position(outcome[0]))
        elif backlog:
            self.wasted_slots += 1
        ref = self.reference[slot]
        w1 = self.cfg.w1_us
        views = self.views
        for node in self.groups[slot]:
            v = observe_and_update(views[node], outcome, w1)
            views[node] = v
            if self.check_views and v.queue.order != ref.order:
                self.view_mismatches += 1
        if self.queue_trace is not None:
            self.queue_trace.append((index, before.order, None if outcome is None else outcome[0]))
