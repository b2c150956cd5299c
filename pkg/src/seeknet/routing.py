"""Energy-aware next-hop selection from beacon-maintained neighbor state.

Each node scores every fresh neighbor with a cross-layer utility (link
reliability x normalized differential backlog x normalized forward progress x
residual-energy ratio) and hands packets to the best strictly positive one.
The objective lives in a registry so that swapping it is a one-function change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .mac import QueuePair
from .model import Beacon, EnergyState, GeoPosition, NodeId, distance_between


class DegenerateDestination(ValueError):
    pass


@dataclass
class NeighborRecord:
    id: NodeId
    position: GeoPosition
    energy_ratio: float
    backlog: int
    link_quality: float = 1.0
    last_heard: float = 0.0


@dataclass
class NeighborTable:
    staleness_limit: float = 3.0
    records: dict[NodeId, NeighborRecord] = field(default_factory=dict)

    def __contains__(self, node: NodeId) -> bool:
        return node in self.records

    def __getitem__(self, node: NodeId) -> NeighborRecord:
        return self.records[node]

    def __len__(self) -> int:
        return len(self.records)

    def values(self):
        return self.records.values()


@dataclass
class SelfState:
    id: NodeId
    position: GeoPosition
    energy: EnergyState
    backlog: int

    def __post_init__(self):
        if self.backlog < 0:
            raise ValueError("negative backlog")


def seek_utility(self_state: SelfState, nb: NeighborRecord, dest: GeoPosition) -> float:
    d_is = distance_between(self_state.position, dest)
    if d_is == 0:
        raise DegenerateDestination(f"node {self_state.id} sits on the destination")
    d_js = distance_between(nb.position, dest)
    q_i = self_state.backlog
    # no backlog means nothing to route; defined as 0 to avoid dividing by zero
    pressure = max(q_i - nb.backlog, 0) / q_i if q_i > 0 else 0.0
    progress = (d_is - d_js) / d_is
    return nb.link_quality * pressure * progress * nb.energy_ratio


UtilityFn = Callable[[SelfState, NeighborRecord, GeoPosition], float]

UTILITIES: dict[str, UtilityFn] = {"seek": seek_utility}


def register_utility(name: str, fn: UtilityFn) -> None:
    UTILITIES[name] = fn


def compute_utility(self_state: SelfState, nb: NeighborRecord, dest: GeoPosition,
                    utility: str = "seek") -> float:
    return UTILITIES[utility](self_state, nb, dest)


def _rank_key(u: float, nb: NeighborRecord) -> tuple:
    return (u, nb.energy_ratio, -nb.id)


def select_next_hop(self_state: SelfState, table: NeighborTable, dest: GeoPosition,
                    dest_id: Optional[NodeId] = None, utility: str = "seek") -> Optional[NodeId]:
    """Best neighbor with strictly positive utility, or None.

    Ties go to the higher energy ratio, then the lower node id. The
    destination itself competes like any other neighbor when it is fresh.
    """
    fn = UTILITIES[utility]
    best = None
    best_key = None
    for nb in table.values():
        u = fn(self_state, nb, dest)
        if u <= 0:
            continue
        key = _rank_key(u, nb)
        if best_key is None or key > best_key:
            best, best_key = nb.id, key
    return best


def assign_routes(self_state: SelfState, queues: QueuePair, table: NeighborTable,
                  destinations: dict[NodeId, GeoPosition], utility: str = "seek") -> int:
    """Stamp next hops on General Queue packets in FIFO order; unroutable ones stay put."""
    if not queues.general_queue:
        return 0
    choice: dict[NodeId, Optional[NodeId]] = {}
    keep = []
    routed = 0
    while queues.general_queue:
        p = queues.general_queue.popleft()
        if p.dst not in choice:
            dest = destinations.get(p.dst)
            if dest is None or distance_between(self_state.position, dest) == 0:
                choice[p.dst] = None
            else:
                choice[p.dst] = select_next_hop(self_state, table, dest, p.dst, utility)
        hop = choice[p.dst]
        if hop is None:
            keep.append(p)
        else:
            queues.route(p, hop)
            routed += 1
    queues.general_queue.extend(keep)
    return routed


def update_link_quality(record: NeighborRecord, success: bool, alpha: float) -> None:
    record.link_quality = (1.0 - alpha) * record.link_quality + alpha * (1.0 if success else 0.0)


def ingest_beacon(table: NeighborTable, beacon: Beacon, now: float, alpha: float = 0.1) -> None:
    rec = table.records.get(beacon.origin)
    if rec is None:
        table.records[beacon.origin] = NeighborRecord(
            beacon.origin, beacon.position, beacon.energy_ratio, beacon.backlog,
            link_quality=1.0, last_heard=now)
        return
    rec.position = beacon.position
    rec.energy_ratio = beacon.energy_ratio
    rec.backlog = beacon.backlog
    rec.last_heard = now
    update_link_quality(rec, True, alpha)


def build_beacon(self_state: SelfState, now: float) -> Beacon:
    return Beacon(self_state.id, self_state.position, self_state.energy.ratio,
                  self_state.backlog, now)


def evict_stale(table: NeighborTable, now: float) -> list[NodeId]:
    gone = [nid for nid, r in table.records.items() if now - r.last_heard > table.staleness_limit]
    for nid in gone:
        del table.records[nid]
    return gone
