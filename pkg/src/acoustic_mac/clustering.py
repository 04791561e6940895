"""Cluster registration handshake and nearest-head assignment.

Wire formats (big-endian, fixed length)::

    RGT   : kind(1) | head_id(2) | x(3) | y(3)          = 9 octets
    J_REQ : kind(1) | node_id(2) | snr_db(2) | head_id(2) = 7 octets

Coordinates are signed 24-bit fixed point in centimetres (range about
+-83.8 km); SNR is signed 16-bit fixed point in tenths of a dB (range
+-3276.7 dB).  Values are quantized on construction so that a message
round-trips through its codec unchanged.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .sensing import PerformanceRequirement, cluster_size_eq4

RGT_KIND = 0x01
JREQ_KIND = 0x02

RGT_LENGTH = 9
JREQ_LENGTH = 7

_POS_SCALE = 100  # centimetres
_SNR_SCALE = 10  # tenths of a dB
_INT24_MIN, _INT24_MAX = -(1 << 23), (1 << 23) - 1
_INT16_MIN, _INT16_MAX = -(1 << 15), (1 << 15) - 1

Position = tuple[float, float]


class CodecError(ValueError):
    pass


class WrongMessageKind(CodecError):
    pass


class TruncatedMessage(CodecError):
    pass


class NoHeadInRange(LookupError):
    pass


def _fixed(value: float, scale: int, lo: int, hi: int, name: str) -> int:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite")
    raw = round(value * scale)
    if not lo <= raw <= hi:
        raise ValueError(f"{name}={value} outside encodable range")
    return raw


def _check_u16(value: int, name: str) -> int:
    if not 0 <= value <= 0xFFFF:
        raise ValueError(f"{name} must fit in 16 bits unsigned")
    return int(value)


@dataclass(frozen=True)
class RgtMessage:
    cluster_head_id: int
    position: Position
    header: int = RGT_KIND

    def __post_init__(self) -> None:
        if self.header != RGT_KIND:
            raise ValueError("RGT header must carry the RGT kind tag")
        _check_u16(self.cluster_head_id, "cluster_head_id")
        x, y = self.position
        qx = _fixed(x, _POS_SCALE, _INT24_MIN, _INT24_MAX, "x") / _POS_SCALE
        qy = _fixed(y, _POS_SCALE, _INT24_MIN, _INT24_MAX, "y") / _POS_SCALE
        object.__setattr__(self, "position", (qx, qy))


@dataclass(frozen=True)
class JoinRequest:
    node_id: int
    snr_db: float
    dest_cluster_head_id: int

    def __post_init__(self) -> None:
        _check_u16(self.node_id, "node_id")
        _check_u16(self.dest_cluster_head_id, "dest_cluster_head_id")
        q = _fixed(self.snr_db, _SNR_SCALE, _INT16_MIN, _INT16_MAX, "snr_db") / _SNR_SCALE
        object.__setattr__(self, "snr_db", q)


def _pack_i24(v: int) -> bytes:
    return v.to_bytes(3, "big", signed=True)


def _unpack_i24(b: bytes) -> int:
    return int.from_bytes(b, "big", signed=True)


def encode_rgt(m: RgtMessage) -> bytes:
    x = round(m.position[0] * _POS_SCALE)
    y = round(m.position[1] * _POS_SCALE)
    return struct.pack(">BH", m.header, m.cluster_head_id) + _pack_i24(x) + _pack_i24(y)


def _check_frame(octets: bytes, kind: int, length: int) -> None:
    if len(octets) < 1:
        raise TruncatedMessage("empty buffer")
    if octets[0] != kind:
        raise WrongMessageKind(f"wrong message kind: expected 0x{kind:02x}, got 0x{octets[0]:02x}")
    if len(octets) < length:
        raise TruncatedMessage(f"truncated message: {len(octets)} of {length} octets")
    if len(octets) > length:
        raise CodecError(f"trailing octets: {len(octets)} > {length}")


def decode_rgt(octets: bytes) -> RgtMessage:
    octets = bytes(octets)
    _check_frame(octets, RGT_KIND, RGT_LENGTH)
    _, head_id = struct.unpack(">BH", octets[:3])
    x = _unpack_i24(octets[3:6]) / _POS_SCALE
    y = _unpack_i24(octets[6:9]) / _POS_SCALE
    return RgtMessage(head_id, (x, y))


def encode_join(j: JoinRequest) -> bytes:
    return struct.pack(">BHhH", JREQ_KIND, j.node_id, round(j.snr_db * _SNR_SCALE), j.dest_cluster_head_id)


def decode_join(octets: bytes) -> JoinRequest:
    octets = bytes(octets)
    _check_frame(octets, JREQ_KIND, JREQ_LENGTH)
    _, node_id, snr_raw, head_id = struct.unpack(">BHhH", octets)
    return JoinRequest(node_id, snr_raw / _SNR_SCALE, head_id)


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss without fading."""

    snr_ref_db: float = 40.0
    exponent: float = 2.0
    ref_distance_m: float = 1.0


def _distance(p: Position, q: Position) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def received_snr(head_pos: Position, node_pos: Position, model: PathLossModel = PathLossModel()) -> float:
    d = _distance(head_pos, node_pos)
    if d <= 0:
        raise ValueError("node and head are co-located; SNR undefined")
    return model.snr_ref_db - 10.0 * model.exponent * math.log10(d / model.ref_distance_m)


def select_head(rgts: Sequence[RgtMessage], node_pos: Position) -> int:
    """Nearest advertising head; equal distances go to the lowest id."""
    if not rgts:
        raise NoHeadInRange("no head in range")
    best = min(rgts, key=lambda m: (_distance(m.position, node_pos), m.cluster_head_id))
    return best.cluster_head_id


@dataclass
class ClusterPlan:
    heads: list[tuple[int, Position]]
    assignments: dict[int, int]
    reported_snrs: dict[int, float]
    required_size: dict[int, int] = field(default_factory=dict)
    unassigned: list[int] = field(default_factory=list)

    def members(self, head_id: int) -> list[int]:
        return sorted(n for n, h in self.assignments.items() if h == head_id)

    def to_dict(self) -> dict:
        return {
            "heads": [{"id": h, "x": p[0], "y": p[1]} for h, p in self.heads],
            "assignments": {str(n): h for n, h in sorted(self.assignments.items())},
            "snrs_db": {str(n): s for n, s in sorted(self.reported_snrs.items())},
            "required_size": {str(h): s for h, s in sorted(self.required_size.items())},
            "unassigned": sorted(self.unassigned),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClusterPlan":
        return cls(
            heads=[(int(h["id"]), (float(h["x"]), float(h["y"]))) for h in d["heads"]],
            assignments={int(n): int(h) for n, h in d["assignments"].items()},
            reported_snrs={int(n): float(s) for n, s in d["snrs_db"].items()},
            required_size={int(h): int(s) for h, s in d.get("required_size", {}).items()},
            unassigned=[int(n) for n in d.get("unassigned", [])],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClusterPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def form_clusters(
    heads: Iterable[tuple[int, Position]],
    nodes: Mapping[int, Position],
    range_m: float,
    model: PathLossModel = PathLossModel(),
    requirement: PerformanceRequirement | None = None,
) -> ClusterPlan:
    """Run the registration handshake once, at time zero.

    Each head broadcasts an encoded RGT; every node decodes the RGTs it can
    hear, joins the nearest head and answers with an encoded J_REQ carrying
    its measured SNR.  Heads decode the J_REQs to build the roster.
    """
    if not range_m > 0:
        raise ValueError("range_m must be > 0")
    heads = [(int(h), (float(p[0]), float(p[1]))) for h, p in heads]
    air = [encode_rgt(RgtMessage(h, p)) for h, p in heads]

    replies: list[bytes] = []
    unassigned: list[int] = []
    for node_id in sorted(nodes):
        pos = nodes[node_id]
        heard = [m for m in map(decode_rgt, air) if _distance(m.position, pos) <= range_m]
        if not heard:
            unassigned.append(node_id)
            continue
        head_id = select_head(heard, pos)
        head_pos = next(m.position for m in heard if m.cluster_head_id == head_id)
        replies.append(encode_join(JoinRequest(node_id, received_snr(head_pos, pos, model), head_id)))

    assignments: dict[int, int] = {}
    snrs: dict[int, float] = {}
    for raw in replies:
        j = decode_join(raw)
        assignments[j.node_id] = j.dest_cluster_head_id
        snrs[j.node_id] = j.snr_db

    sizes = {}
    if requirement is not None:
        s = cluster_size_eq4(requirement)
        sizes = {h: s for h, _ in heads}
    return ClusterPlan(heads, assignments, snrs, sizes, unassigned)
