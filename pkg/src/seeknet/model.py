"""Domain types shared across the stack: positions, energy, packets, segments, beacons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

NodeId = int

SUPPORTED_RATES_MBPS = (1.0, 2.0, 5.5, 11.0)
DEFAULT_PAYLOAD_BYTES = 1000
DEFAULT_SEGMENT_SIZE = 32


class ScenarioError(ValueError):
    """Base class for every scenario problem surfaced to the user."""


class DuplicateNodeId(ScenarioError):
    pass


class UnknownSessionEndpoint(ScenarioError):
    pass


class UnsupportedDataRate(ScenarioError):
    pass


class NonPositiveDuration(ScenarioError):
    pass


class Role(str, Enum):
    SOURCE = "source"
    RELAY = "relay"
    GATEWAY = "gateway"


@dataclass(frozen=True)
class GeoPosition:
    x: float
    y: float
    altitude: Optional[float] = None

    def __post_init__(self):
        coords = (self.x, self.y) if self.altitude is None else (self.x, self.y, self.altitude)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite position {coords}")


def distance_between(a: GeoPosition, b: GeoPosition) -> float:
    """Planar Euclidean distance in meters (altitude ignored)."""
    return math.hypot(a.x - b.x, a.y - b.y)


def from_lat_lon(lat: float, lon: float, ref_lat: float, ref_lon: float) -> GeoPosition:
    """Equirectangular projection of (lat, lon) around a reference point."""
    r = 6371008.8
    x = math.radians(lon - ref_lon) * r * math.cos(math.radians(ref_lat))
    y = math.radians(lat - ref_lat) * r
    return GeoPosition(x, y)


@dataclass
class EnergyState:
    initial_j: float
    residual_j: float

    def __post_init__(self):
        if self.initial_j <= 0:
            raise ValueError("initial energy must be positive")
        if not 0 <= self.residual_j <= self.initial_j:
            raise ValueError("residual energy must lie in [0, initial]")

    @property
    def ratio(self) -> float:
        return self.residual_j / self.initial_j

    def consume(self, joules: float) -> None:
        self.residual_j = max(0.0, self.residual_j - joules)

    def set_ratio(self, ratio: float) -> None:
        self.residual_j = min(self.initial_j, max(0.0, ratio * self.initial_j))

    @property
    def depleted(self) -> bool:
        return self.residual_j <= 0.0


@dataclass
class Packet:
    seq: int
    src: NodeId
    dst: NodeId
    payload_len: int
    created_at: float
    assigned_next_hop: Optional[NodeId] = None

    def __post_init__(self):
        if self.payload_len <= 0:
            raise ValueError("payload_len must be positive")
        if self.src == self.dst:
            raise ValueError("packet src equals dst")

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.seq)


@dataclass
class Segment:
    packets: list[Packet]
    next_hop: NodeId
    retries_rts: int = 0
    retries_data: int = 0

    def __post_init__(self):
        if not self.packets:
            raise ValueError("empty segment")
        for p in self.packets:
            if p.assigned_next_hop != self.next_hop:
                raise ValueError("packet next hop differs from segment next hop")

    def __len__(self) -> int:
        return len(self.packets)


@dataclass(frozen=True)
class Beacon:
    origin: NodeId
    position: GeoPosition
    energy_ratio: float
    backlog: int
    issued_at: float

    def __post_init__(self):
        if not 0.0 <= self.energy_ratio <= 1.0:
            raise ValueError("energy_ratio outside [0, 1]")
        if self.backlog < 0:
            raise ValueError("negative backlog")


@dataclass
class NodeConfig:
    id: NodeId
    position: GeoPosition
    energy: EnergyState
    role: Role = Role.RELAY
    fixed_backlog_offset: int = 0


@dataclass
class Session:
    src: NodeId
    dst: NodeId
    rate: float
    payload_bytes: int = DEFAULT_PAYLOAD_BYTES
    start: float = 0.0
    stop: float = math.inf

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("session rate must be positive")
        if self.start >= self.stop:
            raise ValueError("session start must precede stop")


@dataclass
class WorldEvent:
    """A timed perturbation. ``action`` is one of the names below."""

    at: float
    action: str
    node: Optional[NodeId] = None
    count: Optional[int] = None
    ratio: Optional[float] = None
    position: Optional[GeoPosition] = None
    session: Optional[int] = None

    ACTIONS = ("set_backlog_offset", "set_residual_energy", "move_node",
               "start_session", "stop_session")


def validate_ids(nodes: list[NodeConfig]) -> dict[NodeId, NodeConfig]:
    by_id: dict[NodeId, NodeConfig] = {}
    for n in nodes:
        if n.id in by_id:
            raise DuplicateNodeId(f"duplicate node id {n.id}")
        by_id[n.id] = n
    return by_id


def check_rate(rate: float) -> float:
    if float(rate) not in SUPPORTED_RATES_MBPS:
        raise UnsupportedDataRate(
            f"data rate {rate} Mbps not in {list(SUPPORTED_RATES_MBPS)}")
    return float(rate)


BROADCAST: NodeId = -1

