"""Deterministic discrete-event kernel.

Time is an integer count of microseconds.  Events dispatch in strict
``(time, priority, seq)`` order, where ``seq`` is the insertion counter, so
a run is a pure function of its inputs.

Energy is kept in integer nanojoules: 1 mW for 1 us is exactly 1 nJ.
"""

from __future__ import annotations

import hashlib
import heapq
import zlib
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, TextIO

import numpy as np

US = 1
MS = 1000
SECOND = 1_000_000

# same-time ordering; lower dispatches first
PRIO_TX_END = 0
PRIO_ARRIVAL = 1
PRIO_SLOT = 2
PRIO_SENSE = 3
PRIO_SLOT_END = 4


class SchedulingError(ValueError):
    pass


class ChannelError(RuntimeError):
    pass


class Event:
    """Handle returned by :meth:`Simulator.schedule`."""

    __slots__ = ("time", "priority", "seq", "callback", "args", "node", "action", "pending")

    def __init__(self, time, priority, seq, callback, args, node, action):
        self.time = time
        self.priority = priority
        self.seq = seq
        self.callback = callback
        self.args = args
        self.node = node
        self.action = action
        self.pending = True

    def sort_key(self) -> tuple[int, int, int]:
        return (self.time, self.priority, self.seq)

    def __repr__(self) -> str:
        return f"Event(t={self.time}, prio={self.priority}, seq={self.seq}, action={self.action!r})"


class Simulator:
    def __init__(self, trace: TextIO | list | None = None):
        self.now = 0
        self._heap: list[tuple[int, int, int, Event]] = []
        self._seq = 0
        self.dispatched = 0
        self._trace = trace
        self.busy_probe: Callable[[int], bool] | None = None
        self._stopped = False

    def schedule(
        self,
        time: int,
        callback: Callable[..., Any],
        *args: Any,
        priority: int = 0,
        node: int | None = None,
        action: str = "",
    ) -> Event:
        time = int(time)
        if time < self.now:
            raise SchedulingError(f"cannot schedule at {time} us; clock is at {self.now} us")
        ev = Event(time, priority, self._seq, callback, args, node, action)
        self._seq += 1
        heapq.heappush(self._heap, (time, priority, ev.seq, ev))
        return ev

    def schedule_in(self, delay: int, callback, *args, **kw) -> Event:
        return self.schedule(self.now + delay, callback, *args, **kw)

    @staticmethod
    def cancel(handle: Event) -> bool:
        """Cancel a pending event; False if it already ran or was cancelled."""
        if not handle.pending:
            return False
        handle.pending = False
        return True

    def peek_time(self) -> int | None:
        while self._heap and not self._heap[0][3].pending:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def stop(self) -> None:
        self._stopped = True

    def run(self, until: int | None = None) -> None:
        """Dispatch events up to and including time ``until``."""
        heap = self._heap
        trace = self._trace
        self._stopped = False
        while heap and not self._stopped:
            t, _, _, ev = heap[0]
            if until is not None and t > until:
                break
            heapq.heappop(heap)
            if not ev.pending:
                continue
            ev.pending = False
            self.now = t
            self.dispatched += 1
            ev.callback(*ev.args)
            if trace is not None and ev.action:
                self._write_trace(ev)
        if until is not None and until > self.now:
            self.now = until

    def _write_trace(self, ev: Event) -> None:
        busy = int(self.busy_probe(self.now)) if self.busy_probe else 0
        node = "-" if ev.node is None else ev.node
        line = f"{ev.time} {node} {ev.action} {busy}"
        if isinstance(self._trace, list):
            self._trace.append(line)
        else:
            self._trace.write(line + "\n")


class EnergyLedger:
    """Integer-nJ energy meters keyed by any hashable account id.

    Each account is in one of three states: ``"tx"``, ``"idle"`` or ``None``
    (not tracked).  Switching state charges the elapsed time at the power
    of the state being left.
    """

    def __init__(self, tx_mw: int = 35, idle_mw: int = 41):
        if int(tx_mw) != tx_mw or int(idle_mw) != idle_mw:
            raise ValueError("powers must be whole milliwatts for exact nJ accounting")
        self.power = {"tx": int(tx_mw), "idle": int(idle_mw)}
        self.energy_nj: dict[Hashable, int] = {}
        self.time_us: dict[Hashable, dict[str, int]] = {}
        self._state: dict[Hashable, tuple[str | None, int]] = {}

    def set_state(self, key: Hashable, state: str | None, now: int) -> None:
        if state is not None and state not in self.power:
            raise ValueError(f"unknown power state {state!r}")
        prev, since = self._state.get(key, (None, now))
        if now < since:
            raise ValueError("energy ledger cannot run backwards")
        if prev is not None:
            dt = now - since
            self.energy_nj[key] = self.energy_nj.get(key, 0) + self.power[prev] * dt
            times = self.time_us.setdefault(key, {"tx": 0, "idle": 0})
            times[prev] += dt
        else:
            self.energy_nj.setdefault(key, 0)
            self.time_us.setdefault(key, {"tx": 0, "idle": 0})
        self._state[key] = (state, now)

    def state(self, key: Hashable) -> str | None:
        return self._state.get(key, (None, 0))[0]

    def close(self, key: Hashable, now: int) -> int:
        self.set_state(key, None, now)
        return self.energy_nj[key]

    def total(self, key: Hashable) -> int:
        return self.energy_nj.get(key, 0)


@dataclass(eq=False)
class Transmission:
    node_id: int
    start: int
    end: int
    collided: bool = False
    payload: Any = None
    on_end: Callable[["Transmission"], None] | None = None

    def overlaps(self, other: "Transmission") -> bool:
        return self.start < other.end and other.start < self.end


class Channel:
    """Idealized shared half-duplex channel of one cluster.

    Zero propagation delay, full connectivity and perfect sensing.
    Transmission intervals are half-open ``[start, end)``: a transmission
    that ends at ``t`` does not make the channel busy at ``t``.  A packet
    survives iff its interval overlaps no other transmission.
    """

    def __init__(self, sim: Simulator, ledger: EnergyLedger | None = None, keep_history: bool = False):
        self.sim = sim
        self.ledger = ledger
        self.active: list[Transmission] = []
        self.last_end = -1
        self.collisions = 0
        self.successes = 0
        self.history: list[Transmission] | None = [] if keep_history else None
        self._transmitting: set[int] = set()

    def _purge(self, now: int) -> None:
        if self.active and any(t.end <= now for t in self.active):
            self.active = [t for t in self.active if t.end > now]

    def busy(self, at: int | None = None) -> bool:
        at = self.sim.now if at is None else at
        return any(t.start <= at < t.end for t in self.active)

    def carrier_sense(self, node_id: int, at: int | None = None) -> bool:
        return self.busy(at)

    def heard(self, at: int | None = None) -> set[int]:
        """Nodes decodable at ``at``: only when exactly one transmission is on air."""
        at = self.sim.now if at is None else at
        on_air = [t for t in self.active if t.start <= at < t.end]
        return {on_air[0].node_id} if len(on_air) == 1 else set()

    def idle_since(self, t0: int) -> bool:
        """True when no transmission overlapped ``[t0, now)``."""
        now = self.sim.now
        if any(t.start < now for t in self.active if t.end > now):
            return False
        return self.last_end <= t0

    def busy_until(self) -> int:
        """End of the busy period that covers ``now`` (``now`` if idle)."""
        now = self.sim.now
        ends = [t.end for t in self.active if t.start <= now < t.end]
        return max(ends) if ends else now

    def begin_transmission(
        self,
        node_id: int,
        duration: int,
        on_end: Callable[[Transmission], None] | None = None,
        payload: Any = None,
    ) -> Transmission:
        if duration <= 0:
            raise ChannelError("transmission duration must be positive")
        if node_id in self._transmitting:
            raise ChannelError(f"node {node_id} is already transmitting")
        now = self.sim.now
        self._purge(now)
        tx = Transmission(node_id, now, now + int(duration), payload=payload, on_end=on_end)
        for other in self.active:
            if other.overlaps(tx):
                other.collided = True
                tx.collided = True
        self.active.append(tx)
        self._transmitting.add(node_id)
        if self.ledger is not None:
            self.ledger.set_state(("node", node_id), "tx", now)
        self.sim.schedule(tx.end, self._finish, tx, priority=PRIO_TX_END, node=node_id, action="tx_end")
        return tx

    def _finish(self, tx: Transmission) -> None:
        self._transmitting.discard(tx.node_id)
        self.last_end = max(self.last_end, tx.end)
        self._purge(self.sim.now)
        if tx.collided:
            self.collisions += 1
        else:
            self.successes += 1
        if self.history is not None:
            self.history.append(tx)
        if self.ledger is not None:
            # MAC layers drop the node to untracked if it has nothing left
            self.ledger.set_state(("node", tx.node_id), "idle", self.sim.now)
        if tx.on_end is not None:
            tx.on_end(tx)


@dataclass(frozen=True)
class RunSeed:
    """Master seed with named, independent substreams.

    Substreams are keyed by a stable CRC of the purpose string plus integer
    keys (node id, repetition), so adding a new consumer never perturbs the
    existing streams.
    """

    seed: int

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def stream(self, purpose: str, *keys: int) -> np.random.Generator:
        tag = zlib.crc32(purpose.encode("utf-8"))
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(tag, *(int(k) for k in keys)))
        return np.random.Generator(np.random.PCG64(ss))


def trace_digest(lines: Iterable[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
