"""Calibrated link model, airtime accounting and the shared-medium collision model."""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from .model import BROADCAST, GeoPosition, NodeId, distance_between

# Measured reliability per (rate, distance); 1 Mbps is derived from the 2 Mbps rows.
MEASURED_TABLE: dict[float, list[tuple[float, float]]] = {
    2.0: [(495.2, 0.999), (771.2, 0.9977), (1019.0, 0.9808)],
    5.5: [(495.2, 0.9962), (771.2, 0.9603), (1019.0, 0.9716)],
    11.0: [(495.2, 0.8528), (771.2, 0.3156), (1019.0, 0.139)],
}
DEFAULT_CUTOFF_M = 1942.0
DEFAULT_ONE_MBPS_ROBUSTNESS = 0.5


class UnknownRate(KeyError):
    pass


class HalfDuplexViolation(AssertionError):
    pass


def default_calibration(robustness: float = DEFAULT_ONE_MBPS_ROBUSTNESS
                        ) -> dict[float, list[tuple[float, float]]]:
    table = {rate: list(rows) for rate, rows in MEASURED_TABLE.items()}
    table[1.0] = [(d, 1.0 - robustness * (1.0 - p)) for d, p in MEASURED_TABLE[2.0]]
    return table


@dataclass
class LinkModel:
    calibration: dict[float, list[tuple[float, float]]] = field(default_factory=default_calibration)
    cutoff_distance: float = DEFAULT_CUTOFF_M
    control_rate: float = 1.0

    def __post_init__(self):
        for rate, rows in self.calibration.items():
            if not rows:
                raise ValueError(f"empty calibration row for {rate} Mbps")
            dists = [d for d, _ in rows]
            if dists != sorted(dists):
                raise ValueError(f"calibration for {rate} Mbps not sorted by distance")
            if any(not 0.0 <= p <= 1.0 for _, p in rows):
                raise ValueError(f"calibration for {rate} Mbps has probability outside [0, 1]")
            if self.cutoff_distance < dists[-1]:
                raise ValueError("cutoff_distance below last calibration point")
        self._dists = {r: [d for d, _ in rows] for r, rows in self.calibration.items()}

    @classmethod
    def pinned(cls, p: float, rates: Iterable[float] = (1.0, 2.0, 5.5, 11.0),
               cutoff_distance: float = DEFAULT_CUTOFF_M) -> "LinkModel":
        """Distance-independent model: every rate succeeds with ``p`` inside the cutoff."""
        rows = [(0.0, p), (cutoff_distance, p)]
        return cls({float(r): list(rows) for r in rates}, cutoff_distance)

    def reliability(self, rate: float, distance: float) -> float:
        return link_reliability(self, rate, distance)


def link_reliability(model: LinkModel, rate: float, distance: float) -> float:
    """Packet success probability at ``distance`` meters for ``rate`` Mbps.

    Clamped below the first calibration point, piecewise linear between points,
    decaying linearly to zero at the cutoff, and exactly zero at or beyond it.
    """
    try:
        rows = model.calibration[float(rate)]
    except KeyError:
        raise UnknownRate(f"no calibration row for {rate} Mbps") from None
    if distance >= model.cutoff_distance:
        return 0.0
    dists = model._dists[float(rate)]
    if distance <= dists[0]:
        return rows[0][1]
    if distance == dists[-1]:
        return rows[-1][1]
    if distance > dists[-1]:
        d_last, p_last = rows[-1]
        span = model.cutoff_distance - d_last
        if span <= 0:
            return 0.0
        return p_last * (model.cutoff_distance - distance) / span
    k = bisect.bisect_right(dists, distance)
    (d0, p0), (d1, p1) = rows[k - 1], rows[k]
    if d1 == d0:
        return p1
    return p0 + (p1 - p0) * (distance - d0) / (d1 - d0)


class FrameKind(str, Enum):
    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    BLOCK_ACK = "BLOCK_ACK"
    BEACON = "BEACON"


@dataclass
class RadioConfig:
    """PHY framing overheads. ``data_header_bytes`` is added to DATA frames only."""

    data_rate: float = 1.0
    control_rate: float = 1.0
    data_header_bytes: int = 40
    preamble_s: float = 192e-6
    # host-to-radio handoff between back-to-back DATA frames of a segment
    frame_gap_s: float = 250e-6
    sifs_s: float = 10e-6
    cca_delay_s: float = 15e-6
    rts_bytes: int = 20
    cts_bytes: int = 14
    block_ack_bytes: int = 18
    beacon_bytes: int = 32
    tx_power_w: float = 1.0
    rx_power_w: float = 0.0


@dataclass
class Frame:
    kind: FrameKind
    src: NodeId
    dst: NodeId
    size_bytes: int
    rate: float
    payload: Any = None

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("frame size must be positive")


def frame_airtime(frame: Frame, radio: Optional[RadioConfig] = None) -> float:
    radio = radio or RadioConfig()
    header = radio.data_header_bytes if frame.kind is FrameKind.DATA else 0
    return radio.preamble_s + (frame.size_bytes + header) * 8 / (frame.rate * 1e6)


@dataclass
class Transmission:
    """One channel occupancy by ``tx``: a single frame or a back-to-back DATA burst."""

    frames: list[Frame]
    tx: NodeId
    start: float
    offsets: list[tuple[float, float]]  # per-frame (start, end) absolute times
    end: float

    @classmethod
    def build(cls, frames: list[Frame], tx: NodeId, start: float,
              radio: RadioConfig) -> "Transmission":
        offsets = []
        t = start
        for i, f in enumerate(frames):
            if i:
                t += radio.frame_gap_s
            at = frame_airtime(f, radio)
            offsets.append((t, t + at))
            t += at
        return cls(frames, tx, start, offsets, t)

    @property
    def frame(self) -> Frame:
        return self.frames[0]

    @property
    def kind(self) -> FrameKind:
        return self.frames[0].kind

    @property
    def dst(self) -> NodeId:
        return self.frames[0].dst


class Outcome(str, Enum):
    DELIVERED = "delivered"
    COLLISION = "collision"
    CHANNEL_ERROR = "channel_error"
    DEAF = "deaf"


@dataclass
class Reception:
    transmission: Transmission
    receiver: NodeId
    distance: float
    collided: list[tuple[float, float]] = field(default_factory=list)
    deaf: list[tuple[float, float]] = field(default_factory=list)

    @property
    def is_collided(self) -> bool:
        return bool(self.collided)


def _hits(span: tuple[float, float], intervals: list[tuple[float, float]]) -> bool:
    a, b = span
    return any(s < b and e > a for s, e in intervals)


def resolve_reception(model: LinkModel, reception: Reception,
                      rng: random.Random) -> list[Outcome]:
    """Per-frame outcomes: collision dominates, then a deaf receiver, then a Bernoulli draw."""
    tx = reception.transmission
    out = []
    for frame, span in zip(tx.frames, tx.offsets):
        if _hits(span, reception.collided):
            out.append(Outcome.COLLISION)
        elif _hits(span, reception.deaf):
            out.append(Outcome.DEAF)
        else:
            p = link_reliability(model, frame.rate, reception.distance)
            out.append(Outcome.DELIVERED if rng.random() < p else Outcome.CHANNEL_ERROR)
    return out


class Medium:
    """Shared broadcast channel; tracks who hears whom and which frames overlap."""

    def __init__(self, positions: dict[NodeId, GeoPosition], model: LinkModel):
        self.positions = dict(positions)
        self.model = model
        self.active: list[Transmission] = []
        self.receptions: dict[int, dict[NodeId, Reception]] = {}
        self._range_cache: dict[NodeId, list[tuple[NodeId, float]]] = {}

    def move(self, node: NodeId, pos: GeoPosition) -> None:
        self.positions[node] = pos
        self._range_cache.clear()

    def in_range(self, node: NodeId) -> list[tuple[NodeId, float]]:
        """Other nodes strictly inside the cutoff, with their distance."""
        cached = self._range_cache.get(node)
        if cached is None:
            me = self.positions[node]
            cached = []
            for other, pos in self.positions.items():
                if other == node:
                    continue
                d = distance_between(me, pos)
                if d < self.model.cutoff_distance:
                    cached.append((other, d))
            self._range_cache[node] = cached
        return cached

    def hears(self, a: NodeId, b: NodeId) -> bool:
        return distance_between(self.positions[a], self.positions[b]) < self.model.cutoff_distance

    def transmitting(self, node: NodeId, now: float) -> bool:
        return any(t.tx == node and t.start <= now < t.end for t in self.active)

    def transmit(self, t: Transmission) -> list[Reception]:
        """Put ``t`` on the air and return one Reception per node inside the cutoff."""
        self.active = [a for a in self.active if a.end > t.start]
        if any(a.tx == t.tx for a in self.active):
            raise HalfDuplexViolation(f"node {t.tx} already transmitting at {t.start}")
        recs = {r: Reception(t, r, d) for r, d in self.in_range(t.tx)}
        for a in self.active:
            span = (t.start, min(a.end, t.end))
            a_recs = self.receptions.get(id(a), {})
            for r, rec in recs.items():
                if r == a.tx:
                    rec.deaf.append(span)
                elif r in a_recs:
                    rec.collided.append(span)
                    a_recs[r].collided.append(span)
            if t.tx in a_recs:
                a_recs[t.tx].deaf.append(span)
        self.active.append(t)
        self.receptions[id(t)] = recs
        return list(recs.values())

    def finish(self, t: Transmission) -> list[Reception]:
        """Retire ``t`` and hand back its receptions for resolution."""
        return list(self.receptions.pop(id(t), {}).values())

    def addressed(self, t: Transmission, node: NodeId) -> bool:
        return t.dst == node or t.dst == BROADCAST
