"""Plumbing shared by every MAC scheme: packet injection and bookkeeping."""

from __future__ import annotations

from collections import deque
from typing import Iterable, Mapping

from .kernel import PRIO_ARRIVAL, Channel, EnergyLedger, Simulator, Transmission
from .metrics import PacketRecord


class ProtocolViolation(RuntimeError):
    pass


class MacBase:
    scheme = "base"

    def __init__(self, sim: Simulator, channel: Channel, ledger: EnergyLedger, node_ids: Iterable[int]):
        self.sim = sim
        self.channel = channel
        self.ledger = ledger
        self.queues: dict[int, deque[PacketRecord]] = {n: deque() for n in node_ids}
        self.records: list[PacketRecord] = []

    def load_arrivals(self, arrivals: Mapping[int, Iterable[int]]) -> None:
        """Schedule generation events; packet ids follow (gen_time, node_id)."""
        flat = sorted((int(t), int(n)) for n, times in arrivals.items() for t in times)
        base = len(self.records)
        for i, (t, n) in enumerate(flat):
            if n not in self.queues:
                raise KeyError(f"arrival for unknown node {n}")
            self.sim.schedule(t, self._arrive, n, base + i, priority=PRIO_ARRIVAL, node=n, action="gen")

    def inject(self, node_id: int, packet_id: int | None = None) -> PacketRecord:
        """Generate a packet at the current instant (scripted tests use this)."""
        return self._arrive(node_id, len(self.records) if packet_id is None else packet_id)

    def _arrive(self, node_id: int, packet_id: int) -> PacketRecord:
        now = self.sim.now
        rec = PacketRecord(packet_id, node_id, self.scheme, now)
        self.records.append(rec)
        self.queues[node_id].append(rec)
        self.ledger.set_state(("pkt", packet_id), "idle", now)
        if self.ledger.state(("node", node_id)) is None:
            self.ledger.set_state(("node", node_id), "idle", now)
        self.on_packet(node_id, rec)
        return rec

    def on_packet(self, node_id: int, rec: PacketRecord) -> None:
        pass

    def _transmit(self, node_id: int, rec: PacketRecord, duration: int, on_end) -> Transmission:
        self.ledger.set_state(("pkt", rec.packet_id), "tx", self.sim.now)
        return self.channel.begin_transmission(node_id, duration, on_end=on_end, payload=rec)

    def _attempt_over(self, tx: Transmission) -> PacketRecord:
        rec: PacketRecord = tx.payload
        rec.tx_time_us += tx.end - tx.start
        if tx.collided:
            rec.collided_attempts += 1
            self.ledger.set_state(("pkt", rec.packet_id), "idle", self.sim.now)
        else:
            rec.tx_start = tx.start
            rec.tx_end = tx.end
            rec.energy_nj = self.ledger.close(("pkt", rec.packet_id), self.sim.now)
            q = self.queues[tx.node_id]
            if not q or q[0] is not rec:
                raise ProtocolViolation(f"node {tx.node_id} delivered a packet out of FIFO order")
            q.popleft()
            if not q:
                self.ledger.set_state(("node", tx.node_id), None, self.sim.now)
        return rec

    @property
    def delivered(self) -> list[PacketRecord]:
        return [r for r in self.records if r.complete]

    @property
    def pending(self) -> list[PacketRecord]:
        return [r for r in self.records if not r.complete]
