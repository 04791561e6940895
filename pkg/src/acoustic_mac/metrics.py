"""Per-packet delay/energy records and Fig-6 style aggregates."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

CSV_HEADER = (
    "scheme",
    "total_nodes",
    "nodes_per_slot",
    "ratio",
    "entry",
    "avg_delay_ms",
    "avg_energy_uJ",
    "packets",
    "seed",
    "horizon_s",
)

TX_MW = 35
IDLE_MW = 41


class IncompleteRecord(ValueError):
    pass


@dataclass(slots=True)
class PacketRecord:
    packet_id: int
    node_id: int
    scheme: str
    gen_time: int
    tx_start: int | None = None
    tx_end: int | None = None
    collided_attempts: int = 0
    tx_time_us: int = 0
    energy_nj: int | None = None

    @property
    def complete(self) -> bool:
        return self.tx_start is not None and self.tx_end is not None


def _require_complete(r: PacketRecord) -> None:
    if not r.complete:
        raise IncompleteRecord(f"packet {r.packet_id} has not finished transmitting")


def packet_delay(r: PacketRecord) -> int:
    """Generation to end of transmission, in microseconds."""
    _require_complete(r)
    return r.tx_end - r.gen_time


def packet_energy(r: PacketRecord, tx_mw: int = TX_MW, idle_mw: int = IDLE_MW) -> int:
    """Sender energy over the delay window, in nJ.

    Transmit power covers every attempt the packet made (preambles and
    collided attempts included); idle power covers the rest of the window.
    """
    _require_complete(r)
    delay = r.tx_end - r.gen_time
    tx = r.tx_time_us if r.tx_time_us else r.tx_end - r.tx_start
    return tx_mw * tx + idle_mw * (delay - tx)


@dataclass(frozen=True)
class RunSummary:
    scheme: str
    total_nodes: int
    nodes_per_slot: int
    ratio: str
    entry: int
    avg_delay_ms: float
    avg_energy_uJ: float
    packet_count: int
    seed: int
    horizon_s: float
    pending: int = 0
    collisions: int = 0

    def csv_row(self) -> list[str]:
        return [
            self.scheme,
            str(self.total_nodes),
            str(self.nodes_per_slot),
            self.ratio,
            str(self.entry),
            f"{self.avg_delay_ms:.6f}",
            f"{self.avg_energy_uJ:.6f}",
            str(self.packet_count),
            str(self.seed),
            f"{self.horizon_s:g}",
        ]


def summarize(
    records: Iterable[PacketRecord],
    *,
    scheme: str,
    total_nodes: int,
    nodes_per_slot: int,
    ratio: str,
    entry: int,
    seed: int,
    horizon_s: float,
    collisions: int = 0,
) -> RunSummary:
    """Average delay and energy over delivered packets.

    Sums are exact integers (us and nJ); only the final division is float.
    Undelivered packets are counted in ``pending``.
    """
    delay_sum = energy_sum = delivered = pending = 0
    for r in records:
        if not r.complete:
            pending += 1
            continue
        delay_sum += packet_delay(r)
        energy_sum += r.energy_nj if r.energy_nj is not None else packet_energy(r)
        delivered += 1
    if delivered == 0:
        raise ValueError("no delivered packets to summarize")
    return RunSummary(
        scheme=scheme,
        total_nodes=total_nodes,
        nodes_per_slot=nodes_per_slot,
        ratio=ratio,
        entry=entry,
        avg_delay_ms=delay_sum / delivered / 1000.0,
        avg_energy_uJ=energy_sum / delivered / 1000.0,
        packet_count=delivered,
        seed=seed,
        horizon_s=horizon_s,
        pending=pending,
        collisions=collisions,
    )


def csv_text(summaries: Sequence[RunSummary]) -> str:
    if not summaries:
        raise ValueError("no summaries to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in summaries:
        w.writerow(s.csv_row())
    return buf.getvalue()


def emit_csv(summaries: Sequence[RunSummary], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(csv_text(summaries))
    return path


def plot_data_text(summaries: Sequence[RunSummary], metric: str = "avg_delay_ms") -> str:
    """Gnuplot-style blocks: one per (scheme, ratio), separated by two blank lines."""
    if not summaries:
        raise ValueError("no summaries to write")
    if metric not in ("avg_delay_ms", "avg_energy_uJ"):
        raise ValueError(f"unknown metric {metric!r}")
    blocks: dict[tuple[str, str], list[RunSummary]] = {}
    for s in summaries:
        blocks.setdefault((s.scheme, s.ratio), []).append(s)
    chunks = []
    for (scheme, ratio), rows in blocks.items():
        lines = [f"# scheme={scheme} ratio={ratio} x=total_nodes y={metric}"]
        for s in sorted(rows, key=lambda r: r.total_nodes):
            lines.append(f"{s.total_nodes} {getattr(s, metric):.6f}")
        chunks.append("\n".join(lines))
    return "\n\n\n".join(chunks) + "\n"


def emit_plot_data(summaries: Sequence[RunSummary], path: str | Path, metric: str = "avg_delay_ms") -> Path:
    path = Path(path)
    path.write_text(plot_data_text(summaries, metric))
    return path
