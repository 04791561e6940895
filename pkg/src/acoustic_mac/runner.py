"""Single runs and paired sweeps."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .baselines import POLICY_ROUND_ROBIN, BmacMac, Ieee802154CfpMac
from .config import ScenarioConfig, SweepSpec
from .kernel import Channel, EnergyLedger, RunSeed, Simulator, trace_digest
from .metrics import PacketRecord, RunSummary, packet_delay, summarize
from .proposed import ProposedMac
from .traffic import arrivals_digest, build_population, format_ratio, generate_arrivals

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    config: ScenarioConfig
    summary: RunSummary
    records: list[PacketRecord]
    arrivals_digest: str
    trace: list[str] | None = None
    queue_trace: list[tuple] | None = None
    stats: dict = field(default_factory=dict)

    @property
    def trace_digest(self) -> str | None:
        return None if self.trace is None else trace_digest(self.trace)


def _groups(node_ids, n_groups: int) -> list[list[int]]:
    groups = [[] for _ in range(n_groups)]
    for n in sorted(node_ids):
        groups[n % n_groups].append(n)
    return groups


def build_mac(cfg: ScenarioConfig, sim: Simulator, channel: Channel, ledger: EnergyLedger,
              node_ids, repetition: int = 0, queue_trace: list | None = None):
    seed = RunSeed(cfg.seed)
    tx_us = cfg.packet.tx_duration_us
    if cfg.scheme == "proposed":
        return ProposedMac(sim, channel, ledger, cfg.slot_config,
                           _groups(node_ids, cfg.slot_config.slots_per_superframe), queue_trace=queue_trace)
    if cfg.scheme == "ieee802154-cfp":
        n_groups = cfg.max_gts if cfg.gts_policy == POLICY_ROUND_ROBIN else cfg.slot_config.slots_per_superframe
        return Ieee802154CfpMac(sim, channel, ledger, _groups(node_ids, n_groups),
                                superframe_us=cfg.slot_config.superframe_us, tx_duration_us=tx_us,
                                policy=cfg.gts_policy, max_gts=cfg.max_gts)
    if cfg.scheme == "bmac":
        phase = int(seed.stream("bmac-receiver", 0, repetition).integers(0, cfg.bmac.check_interval_us))
        return BmacMac(sim, channel, ledger, sorted(node_ids), cfg.bmac,
                       rng_for=lambda n: seed.stream("bmac-backoff", n, repetition),
                       tx_duration_us=tx_us, receiver_phase_us=phase)
    raise ValueError(f"unknown scheme {cfg.scheme!r}")


def run(cfg: ScenarioConfig, repetition: int = 0, trace: bool | None = None,
        queue_trace: bool | None = None) -> RunResult:
    """Simulate one scenario.  Deterministic in (cfg, repetition)."""
    trace = cfg.trace if trace is None else trace
    queue_trace = cfg.queue_trace if queue_trace is None else queue_trace
    seed = RunSeed(cfg.seed)
    population = build_population(cfg.mix, seed, repetition)
    arrivals = generate_arrivals(population, seed, cfg.horizon_us, repetition)

    trace_lines: list[str] | None = [] if trace else None
    qtrace: list | None = [] if queue_trace and cfg.scheme == "proposed" else None
    sim = Simulator(trace=trace_lines)
    ledger = EnergyLedger(cfg.tx_mw, cfg.idle_mw)
    channel = Channel(sim, ledger)
    sim.busy_probe = channel.busy
    mac = build_mac(cfg, sim, channel, ledger, arrivals.keys(), repetition, qtrace)
    mac.load_arrivals(arrivals)
    mac.start(stop_us=cfg.stop_us)
    sim.run(until=cfg.stop_us)

    summary = summarize(
        mac.records,
        scheme=cfg.scheme,
        total_nodes=cfg.mix.total_nodes,
        nodes_per_slot=cfg.mix.nodes_per_slot,
        ratio=format_ratio(cfg.mix.ratio),
        entry=cfg.mix.entry,
        seed=cfg.seed,
        horizon_s=cfg.horizon_s,
        collisions=channel.collisions,
    )
    stats = {"events": sim.dispatched, "collisions": channel.collisions, "successes": channel.successes}
    if isinstance(mac, ProposedMac):
        stats.update(view_mismatches=mac.view_mismatches, wasted_slots=mac.wasted_slots, slots=mac.slots_run)
    if isinstance(mac, BmacMac):
        stats.update(received=mac.receiver.received, missed=mac.receiver.missed,
                     busy_cca=mac.busy_cca, cca_attempts=mac.cca_attempts)
    if isinstance(mac, Ieee802154CfpMac):
        stats.update(max_served=mac.max_served)
    if summary.pending:
        log.info("%s: %d packets still pending at %.1f s", cfg.scheme, summary.pending, cfg.horizon_s + cfg.drain_s)
    return RunResult(cfg, summary, mac.records, arrivals_digest(arrivals), trace_lines, qtrace, stats)


@dataclass(frozen=True)
class CellTotals:
    delay_us: int
    energy_nj: int
    delivered: int
    pending: int
    collisions: int
    arrivals_digest: str


def _run_cell(cfg: ScenarioConfig, repetition: int) -> CellTotals:
    res = run(cfg, repetition, trace=False, queue_trace=False)
    done = [r for r in res.records if r.complete]
    return CellTotals(
        sum(packet_delay(r) for r in done),
        sum(r.energy_nj for r in done),
        len(done),
        len(res.records) - len(done),
        res.stats["collisions"],
        res.arrivals_digest,
    )


@dataclass
class SweepResult:
    summaries: list[RunSummary]
    arrivals: dict[tuple[str, int, str, int], str]  # (scheme, N, ratio, rep) -> arrival digest


def sweep(spec: SweepSpec) -> SweepResult:
    """Run every (scheme, N, ratio) cell for every repetition.

    Repetition ``r`` of a cell uses the same traffic substreams for every
    scheme, so schemes are compared on identical arrivals.  Each row pools
    the delivered packets of all repetitions.
    """
    jobs = []
    for scheme, n, ratio in spec.cells():
        cfg = spec.cell_config(scheme, n, ratio)
        for rep in range(spec.repetitions):
            jobs.append(((scheme, n, ratio, rep), cfg))

    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [pool.submit(_run_cell, cfg, key[3]) for key, cfg in jobs]
            totals = [f.result() for f in futures]
    else:
        totals = [_run_cell(cfg, key[3]) for key, cfg in jobs]

    pooled: dict[tuple[str, int, tuple[int, int]], list[CellTotals]] = {}
    digests = {}
    for (key, _), t in zip(jobs, totals):
        pooled.setdefault(key[:3], []).append(t)
        digests[(key[0], key[1], format_ratio(key[2]), key[3])] = t.arrivals_digest

    summaries = []
    for scheme, n, ratio in spec.cells():
        parts = pooled[(scheme, n, ratio)]
        delivered = sum(p.delivered for p in parts)
        if delivered == 0:
            raise RuntimeError(f"cell {scheme} N={n} {format_ratio(ratio)} delivered no packets")
        summaries.append(RunSummary(
            scheme=scheme,
            total_nodes=n * 15,
            nodes_per_slot=n,
            ratio=format_ratio(ratio),
            entry=spec.entry_for(n),
            avg_delay_ms=sum(p.delay_us for p in parts) / delivered / 1000.0,
            avg_energy_uJ=sum(p.energy_nj for p in parts) / delivered / 1000.0,
            packet_count=delivered,
            seed=spec.seed,
            horizon_s=spec.horizon_s,
            pending=sum(p.pending for p in parts),
            collisions=sum(p.collisions for p in parts),
        ))
    return SweepResult(summaries, digests)
