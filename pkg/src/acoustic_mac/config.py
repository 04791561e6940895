"""Scenario and sweep files (TOML) and their validation.

A scenario file looks like::

    scheme = "proposed"            # proposed | ieee802154-cfp | bmac

    [traffic]
    nodes_per_slot = 9
    ratio = "2:1"                  # fixed : random nodes per slot
    entry = 3                      # table row for both intervals
    seed = 1
    horizon_s = 60
    drain_s = 2

    [superframe]                   # optional, defaults shown
    slots = 15
    superframe_ms = 120
    w1_us = 250

    [radio]
    packet_bytes = 50
    rate_kbps = 100
    tx_mw = 35
    idle_mw = 41

    [ieee802154]
    gts_policy = "round-robin"     # or "fifo-pooled"
    strict_standard = false        # true limits the CFP to 7 GTS

    [bmac]
    check_interval_ms = 100
    preamble_ms = 105
    cca_us = 250
    backoff_window_ms = 10

    [outputs]
    trace = false
    queue_trace = false

Validation reports every problem at once through :class:`ConfigError`.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .baselines import (
    GTS_POLICIES,
    GTS_SLOTS,
    POLICY_ROUND_ROBIN,
    STANDARD_GTS_LIMIT,
    BmacConfig,
    BmacConfigError,
)
from .kernel import MS, SECOND
from .proposed import SlotConfig
from .traffic import (
    DEFAULT_SWEEP_NODES_PER_SLOT,
    FIXED_INTERVALS_MS,
    PacketSpec,
    PopulationMix,
    channel_utilization,
    per_slot_load,
)

SCHEMES = ("proposed", "ieee802154-cfp", "bmac")
NOT_IMPLEMENTED_SCHEMES = {
    "ieee802154-cap": "scheme 'ieee802154-cap' is not implemented: contention access is out of scope"
    " (the comparison dedicates all 15 slots to contention-free access); see README"
}

_TOP_KEYS = {"scheme", "traffic", "superframe", "radio", "ieee802154", "bmac", "outputs"}
_SECTION_KEYS = {
    "traffic": {
        "nodes_per_slot", "ratio", "entry", "seed", "horizon_s", "drain_s",
        "fixed_interval_ms", "random_interval_ms",
    },
    "superframe": {"slots", "superframe_ms", "w1_us"},
    "radio": {"packet_bytes", "rate_kbps", "tx_mw", "idle_mw"},
    "ieee802154": {"gts_policy", "strict_standard"},
    "bmac": {"check_interval_ms", "preamble_ms", "cca_us", "backoff_window_ms"},
    "outputs": {"trace", "queue_trace"},
}
_SWEEP_TOP_KEYS = {
    "schemes", "nodes_per_slot", "ratios", "repetitions", "seed", "horizon_s", "drain_s", "jobs",
    "superframe", "radio", "ieee802154", "bmac",
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    scheme: str
    mix: PopulationMix
    slot_config: SlotConfig
    bmac: BmacConfig = field(default_factory=BmacConfig)
    horizon_s: float = 60.0
    drain_s: float = 2.0
    seed: int = 1
    packet: PacketSpec = field(default_factory=PacketSpec)
    tx_mw: int = 35
    idle_mw: int = 41
    gts_policy: str = POLICY_ROUND_ROBIN
    strict_standard: bool = False
    trace: bool = False
    queue_trace: bool = False
    warnings: tuple[str, ...] = ()

    @property
    def horizon_us(self) -> int:
        return round(self.horizon_s * SECOND)

    @property
    def stop_us(self) -> int:
        return round((self.horizon_s + self.drain_s) * SECOND)

    @property
    def utilization(self) -> float:
        return channel_utilization(self.mix, self.packet)

    @property
    def max_gts(self) -> int:
        return STANDARD_GTS_LIMIT if self.strict_standard else GTS_SLOTS

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def _unknown(section: str, got: Mapping, allowed: set, errors: list[str]) -> None:
    for k in sorted(set(got) - allowed):
        where = f"[{section}]" if section else "top level"
        errors.append(f"unknown key '{k}' at {where}")


def _num(d: Mapping, key: str, default, errors: list[str], kind=float, positive=True):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"'{key}' must be a number, got {v!r}")
        return default
    if kind is int and int(v) != v:
        errors.append(f"'{key}' must be an integer, got {v!r}")
        return default
    if positive and v <= 0:
        errors.append(f"'{key}' must be > 0, got {v!r}")
        return default
    return kind(v)


def _common_sections(raw: Mapping, errors: list[str]) -> dict:
    """Parse the sections shared by scenario and sweep files."""
    for sec in ("superframe", "radio", "ieee802154", "bmac"):
        if sec in raw and not isinstance(raw[sec], Mapping):
            errors.append(f"[{sec}] must be a table")
    sf = raw.get("superframe", {}) if isinstance(raw.get("superframe", {}), Mapping) else {}
    radio = raw.get("radio", {}) if isinstance(raw.get("radio", {}), Mapping) else {}
    ieee = raw.get("ieee802154", {}) if isinstance(raw.get("ieee802154", {}), Mapping) else {}
    bm = raw.get("bmac", {}) if isinstance(raw.get("bmac", {}), Mapping) else {}
    _unknown("superframe", sf, _SECTION_KEYS["superframe"], errors)
    _unknown("radio", radio, _SECTION_KEYS["radio"], errors)
    _unknown("ieee802154", ieee, _SECTION_KEYS["ieee802154"], errors)
    _unknown("bmac", bm, _SECTION_KEYS["bmac"], errors)

    out: dict[str, Any] = {}
    out["slots"] = _num(sf, "slots", 15, errors, int)
    out["superframe_us"] = round(_num(sf, "superframe_ms", 120, errors) * MS)
    out["w1_us"] = _num(sf, "w1_us", 250, errors, int)

    size = _num(radio, "packet_bytes", 50, errors, int)
    rate = round(_num(radio, "rate_kbps", 100, errors) * 1000)
    packet = PacketSpec(size, rate)
    try:
        packet.tx_duration_us
    except ValueError as exc:
        errors.append(str(exc))
        packet = PacketSpec()
    out["packet"] = packet
    out["tx_mw"] = _num(radio, "tx_mw", 35, errors, int)
    out["idle_mw"] = _num(radio, "idle_mw", 41, errors, int)

    policy = ieee.get("gts_policy", POLICY_ROUND_ROBIN)
    if policy not in GTS_POLICIES:
        errors.append(f"unknown gts_policy {policy!r}; expected one of {', '.join(GTS_POLICIES)}")
        policy = POLICY_ROUND_ROBIN
    out["gts_policy"] = policy
    strict = ieee.get("strict_standard", False)
    if not isinstance(strict, bool):
        errors.append("'strict_standard' must be true or false")
        strict = False
    out["strict_standard"] = strict

    check = round(_num(bm, "check_interval_ms", 100, errors) * MS)
    pre = bm.get("preamble_ms")
    pre_us = None if pre is None else round(_num(bm, "preamble_ms", 105, errors) * MS)
    try:
        out["bmac"] = BmacConfig(
            check_interval_us=check,
            preamble_us=pre_us,
            cca_us=_num(bm, "cca_us", 250, errors, int),
            backoff_window_us=round(_num(bm, "backoff_window_ms", 10, errors) * MS),
        )
    except BmacConfigError as exc:
        errors.append(str(exc))
        out["bmac"] = BmacConfig()
    return out


def _scheme_errors(scheme: Any) -> list[str]:
    if scheme in NOT_IMPLEMENTED_SCHEMES:
        return [NOT_IMPLEMENTED_SCHEMES[scheme]]
    if scheme not in SCHEMES:
        return [f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}"]
    return []


def _scheme_checks(cfg: ScenarioConfig, errors: list[str], warnings: list[str]) -> None:
    util = cfg.utilization
    if util >= 1.0:
        errors.append(f"channel utilization {util:.4f} >= 1: offered traffic exceeds channel capacity")
    if cfg.scheme == "proposed":
        err = cfg.slot_config.feasibility_error()
        if err:
            errors.append(err)
        load = per_slot_load(cfg.mix, cfg.slot_config.superframe_us / MS)
        if load >= 1.0:
            warnings.append(f"per-slot load {load:.3f} >= 1 packet per superframe: slot queues grow without bound")
    if cfg.scheme == "ieee802154-cfp" and cfg.slot_config.slots_per_superframe != GTS_SLOTS:
        errors.append("ieee802154-cfp needs a 15-slot superframe")
    if cfg.scheme == "bmac":
        busy = util * (cfg.bmac.preamble_us + cfg.packet.tx_duration_us) / cfg.packet.tx_duration_us
        if busy >= 1.0:
            warnings.append(
                f"bmac airtime utilization {busy:.2f} >= 1 (preamble + data per packet): the channel saturates"
                " and packets will remain pending at the horizon"
            )


def build_scenario(raw: Mapping) -> ScenarioConfig:
    """Validate a parsed scenario mapping; raise ConfigError listing every problem."""
    errors: list[str] = []
    warnings: list[str] = []
    _unknown("", raw, _TOP_KEYS, errors)
    scheme = raw.get("scheme")
    if scheme is None:
        errors.append("missing 'scheme'")
    else:
        errors.extend(_scheme_errors(scheme))

    tr = raw.get("traffic", {})
    if not isinstance(tr, Mapping):
        errors.append("[traffic] must be a table")
        tr = {}
    _unknown("traffic", tr, _SECTION_KEYS["traffic"], errors)
    common = _common_sections(raw, errors)
    outputs = raw.get("outputs", {}) if isinstance(raw.get("outputs", {}), Mapping) else {}
    _unknown("outputs", outputs, _SECTION_KEYS["outputs"], errors)

    n = _num(tr, "nodes_per_slot", 9, errors, int)
    entry = _num(tr, "entry", 3, errors, int)
    seed = _num(tr, "seed", 1, errors, int, positive=False)
    if seed < 0 or seed >= 2**64:
        errors.append("'seed' must be an unsigned 64-bit integer")
        seed = 1
    horizon = _num(tr, "horizon_s", 60, errors)
    drain = _num(tr, "drain_s", 2, errors, positive=False)
    if drain < 0:
        errors.append("'drain_s' must be >= 0")
        drain = 2.0
    fixed_iv = tr.get("fixed_interval_ms")
    random_iv = tr.get("random_interval_ms")
    if fixed_iv is not None:
        fixed_iv = _num(tr, "fixed_interval_ms", None, errors)
    if random_iv is not None:
        random_iv = _num(tr, "random_interval_ms", None, errors)

    mix = None
    try:
        mix = PopulationMix(
            nodes_per_slot=n,
            ratio=tr.get("ratio", "2:1"),
            entry=entry,
            slots=common["slots"],
            fixed_interval_ms=fixed_iv,
            random_interval_ms=random_iv,
        )
    except (ValueError, TypeError) as exc:
        errors.append(f"bad traffic mix: {exc}")

    slot_cfg = None
    try:
        slot_cfg = SlotConfig(
            nodes_per_slot=n,
            slots_per_superframe=common["slots"],
            superframe_us=common["superframe_us"],
            w1_us=common["w1_us"],
            tx_duration_us=common["packet"].tx_duration_us,
        )
    except ValueError as exc:
        errors.append(str(exc))

    if mix is None or slot_cfg is None or errors:
        # still run the cross-field checks we can, so the report is complete
        if mix is not None and slot_cfg is not None and scheme in SCHEMES:
            probe = ScenarioConfig(scheme, mix, slot_cfg, packet=common["packet"], bmac=common["bmac"])
            _scheme_checks(probe, errors, warnings)
        elif slot_cfg is not None and scheme == "proposed" and slot_cfg.feasibility_error():
            errors.append(slot_cfg.feasibility_error())
        raise ConfigError(errors)

    cfg = ScenarioConfig(
        scheme=scheme,
        mix=mix,
        slot_config=slot_cfg,
        bmac=common["bmac"],
        horizon_s=horizon,
        drain_s=drain,
        seed=seed,
        packet=common["packet"],
        tx_mw=common["tx_mw"],
        idle_mw=common["idle_mw"],
        gts_policy=common["gts_policy"],
        strict_standard=common["strict_standard"],
        trace=bool(outputs.get("trace", False)),
        queue_trace=bool(outputs.get("queue_trace", False)),
    )
    _scheme_checks(cfg, errors, warnings)
    if errors:
        raise ConfigError(errors)
    return cfg.with_(warnings=tuple(warnings))


def _read_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"file not found: {path}"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: not valid TOML: {exc}"]) from None


def load_scenario(path: str | Path) -> ScenarioConfig:
    return build_scenario(_read_toml(path))


@dataclass(frozen=True)
class SweepSpec:
    schemes: tuple[str, ...] = SCHEMES
    nodes_per_slot: tuple[int, ...] = DEFAULT_SWEEP_NODES_PER_SLOT
    ratios: tuple[tuple[int, int], ...] = ((2, 1), (1, 2))
    repetitions: int = 1
    seed: int = 1
    horizon_s: float = 60.0
    drain_s: float = 2.0
    jobs: int = 1
    base: Mapping = field(default_factory=dict)  # shared sections (superframe, radio, ...)

    def entry_for(self, nodes_per_slot: int) -> int:
        """Axis point i uses table row i."""
        return self.nodes_per_slot.index(nodes_per_slot) + 1

    def cell_config(self, scheme: str, nodes_per_slot: int, ratio: tuple[int, int]) -> ScenarioConfig:
        raw = {
            "scheme": scheme,
            "traffic": {
                "nodes_per_slot": nodes_per_slot,
                "ratio": f"{ratio[0]}:{ratio[1]}",
                "entry": self.entry_for(nodes_per_slot),
                "seed": self.seed,
                "horizon_s": self.horizon_s,
                "drain_s": self.drain_s,
            },
            **{k: dict(v) for k, v in self.base.items()},
        }
        return build_scenario(raw)

    def cells(self) -> list[tuple[str, int, tuple[int, int]]]:
        """Canonical order: scheme, then nodes per slot, then ratio."""
        return [(s, n, r) for s in self.schemes for n in self.nodes_per_slot for r in self.ratios]


def build_sweep(raw: Mapping) -> SweepSpec:
    errors: list[str] = []
    _unknown("", raw, _SWEEP_TOP_KEYS, errors)
    schemes = tuple(raw.get("schemes", SCHEMES))
    for s in schemes:
        errors.extend(_scheme_errors(s))
    nps = tuple(int(x) for x in raw.get("nodes_per_slot", DEFAULT_SWEEP_NODES_PER_SLOT))
    if not nps or len(nps) > len(FIXED_INTERVALS_MS):
        errors.append(f"nodes_per_slot needs 1..{len(FIXED_INTERVALS_MS)} axis points (one per table row)")
    if len(set(nps)) != len(nps):
        errors.append("nodes_per_slot values must be distinct")
    ratios = []
    for r in raw.get("ratios", ["2:1", "1:2"]):
        try:
            a, _, b = str(r).partition(":")
            ratios.append((int(a), int(b)))
        except ValueError:
            errors.append(f"bad ratio {r!r}")
    reps = _num(raw, "repetitions", 1, errors, int)
    jobs = _num(raw, "jobs", 1, errors, int)
    seed = _num(raw, "seed", 1, errors, int, positive=False)
    horizon = _num(raw, "horizon_s", 60, errors)
    drain = _num(raw, "drain_s", 2, errors, positive=False)
    base = {k: raw[k] for k in ("superframe", "radio", "ieee802154", "bmac") if k in raw}
    spec = SweepSpec(schemes, nps, tuple(ratios), reps, seed, horizon, drain, jobs, base)
    if not errors:
        # every cell must validate up front so the sweep never dies half way
        for cell in spec.cells():
            try:
                spec.cell_config(*cell)
            except ConfigError as exc:
                errors.extend(f"cell {cell[0]} N={cell[1]} ratio={cell[2][0]}:{cell[2][1]}: {e}" for e in exc.errors)
    if errors:
        raise ConfigError(errors)
    return spec


def load_sweep(path: str | Path) -> SweepSpec:
    return build_sweep(_read_toml(path))
