"""Deterministic discrete-event kernel hosting one protocol stack per node.

One ``random.Random`` stream drives every draw, and events are dispatched in
(time, seq) order, so a (scenario, seed) pair fully determines the trace.
"""

from __future__ import annotations

import dataclasses
import heapq
import json
import logging
import random
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Iterator, Optional

import numpy as np

from . import mac as M
from .model import BROADCAST, EnergyState, GeoPosition, NodeId, Packet, Session
from .phy import (Frame, FrameKind, Medium, Outcome, Transmission, frame_airtime,
                  resolve_reception)
from .routing import (NeighborTable, SelfState, assign_routes, build_beacon, evict_stale,
                      ingest_beacon, update_link_quality)
from .scenario import Scenario

log = logging.getLogger(__name__)

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional at runtime
    njit = None

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a_py(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK64
    return h


if njit is not None:
    @njit(cache=True)
    def _fnv1a_nb(buf, h):
        prime = np.uint64(FNV_PRIME)
        for i in range(buf.shape[0]):
            h ^= np.uint64(buf[i])
            h *= prime
        return h


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    if njit is None:
        return _fnv1a_py(data)
    buf = np.frombuffer(data, dtype=np.uint8)
    return int(_fnv1a_nb(buf, np.uint64(FNV_OFFSET)))


@dataclass
class EventTrace:
    """Ordered run records: ``(time, node, kind, details)``.

    The canonical serialization is one ``time|node|kind|d1|d2...`` line per
    record with time printed to the nanosecond; the digest is FNV-1a over it.
    """

    records: list[tuple] = field(default_factory=list)

    def add(self, t: float, node: int, kind: str, *details) -> None:
        self.records.append((t, node, kind, details))

    def canonical(self) -> bytes:
        return "".join(
            f"{t:.9f}|{n}|{k}|{'|'.join(map(str, d))}\n" for t, n, k, d in self.records
        ).encode()

    def digest(self) -> str:
        return f"{fnv1a64(self.canonical()):016x}"

    def ndjson(self) -> Iterator[str]:
        for t, n, k, d in self.records:
            yield json.dumps({"time": t, "node": n, "kind": k, "details": list(d)})

    def of_kind(self, kind: str) -> Iterator[tuple]:
        return (r for r in self.records if r[2] == kind)


class EventKind(IntEnum):
    WORLD = 0
    TX_END = 1
    CCA = 2
    TX_START = 3
    MAC_TIMER = 4
    NAV_END = 5
    TRAFFIC = 6
    BEACON = 7
    BEACON_TRY = 8
    ROUTE_TICK = 9
    METRICS = 10


def generate_traffic(session: Session, now: float, seq: int, rng: random.Random,
                     jitter: float = 0.0) -> tuple[Packet, float]:
    """One CBR packet for ``session`` and the time of the next one."""
    pkt = Packet(seq, session.src, session.dst, session.payload_bytes, now)
    gap = 1.0 / session.rate
    if jitter:
        gap *= 1.0 + jitter * (2.0 * rng.random() - 1.0)
    return pkt, now + gap


def energy_accounting(energy: EnergyState, power_w: float, airtime: float) -> None:
    """Charge ``power_w * airtime`` joules, flooring at zero."""
    if power_w > 0:
        energy.consume(power_w * airtime)


class NodeRuntime:
    __slots__ = ("id", "role", "position", "energy", "offset", "queues", "mac", "table",
                 "busy", "nav_until", "tx", "pending_tx", "beacon_pending",
                 "beacon_try", "alive", "last_burst", "forwarded")

    def __init__(self, cfg, scenario: Scenario):
        self.id = cfg.id
        self.role = cfg.role
        self.position = cfg.position
        self.energy = EnergyState(cfg.energy.initial_j, cfg.energy.residual_j)
        self.offset = cfg.fixed_backlog_offset
        self.queues = M.QueuePair(scenario.mac.queue_capacity)
        self.mac = M.MacState.initial(scenario.mac)
        self.table = NeighborTable(scenario.routing.staleness_periods * scenario.routing.beacon_period)
        self.busy = 0
        self.nav_until = 0.0
        self.tx: Optional[Transmission] = None
        self.pending_tx = 0
        self.beacon_pending = False
        self.beacon_try = False
        self.alive = not self.energy.depleted
        self.last_burst: tuple = ()
        self.forwarded = 0


class Simulator:
    def __init__(self, scenario: Scenario, seed: int):
        self.sc = scenario
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = 0.0
        self.radio = scenario.radio
        self.cfg = scenario.mac
        self.model = scenario.link_model
        self.nodes = {n.id: NodeRuntime(n, scenario) for n in scenario.nodes}
        self.medium = Medium({n.id: n.position for n in scenario.nodes}, self.model)
        self.destinations: dict[NodeId, GeoPosition] = {
            s.dst: scenario.node(s.dst).position for s in scenario.sessions}
        self.trace = EventTrace()
        self.ledger: dict[tuple[int, int], Any] = {}
        self.session_of: dict[tuple[int, int], int] = {}
        self.next_seq: dict[NodeId, int] = {}
        self.session_on = [True] * len(scenario.sessions)
        self.session_scheduled = [False] * len(scenario.sessions)
        self.airtime = 0.0
        self.samples: list[tuple[float, int, int]] = []
        self._queue: list = []
        self._seq = 0
        self._sensed: dict[int, list[NodeId]] = {}
        self.dispatched = 0
        self.last_time = 0.0
        self._cts_air = frame_airtime(Frame(FrameKind.CTS, 0, 0, self.radio.cts_bytes,
                                            self.radio.control_rate), self.radio)
        self._ba_air = frame_airtime(Frame(FrameKind.BLOCK_ACK, 0, 0, self.radio.block_ack_bytes,
                                           self.radio.control_rate), self.radio)

    # -------------------------------------------------------------- scheduling

    def schedule(self, t: float, kind: EventKind, target: int, data: Any = None) -> None:
        if t < self.now:
            raise AssertionError(f"event {kind.name} scheduled in the past ({t} < {self.now})")
        self._seq += 1
        heapq.heappush(self._queue, (t, self._seq, kind, target, data))

    def run(self) -> EventTrace:
        sc = self.sc
        dur = sc.sim.duration
        for i, s in enumerate(sc.sessions):
            if s.start <= dur:
                self.session_scheduled[i] = True
                self.schedule(s.start, EventKind.TRAFFIC, s.src, i)
        period = sc.routing.beacon_period
        for nid in self.nodes:
            self.schedule(self.rng.uniform(0, period), EventKind.BEACON, nid)
            self.schedule(self.rng.uniform(0, sc.routing.route_tick), EventKind.ROUTE_TICK, nid)
        for ev in sorted(sc.world_events, key=lambda e: e.at):
            self.schedule(ev.at, EventKind.WORLD, -1, ev)
        if sc.sim.metrics_tick > 0:
            self.schedule(0.0, EventKind.METRICS, -1)

        q = self._queue
        handlers = self._handlers()
        while q and q[0][0] <= dur:
            t, _, kind, target, data = heapq.heappop(q)
            self.now = t
            self.dispatched += 1
            handlers[kind](target, data)
        self.now = dur
        self._finish()
        return self.trace

    def _handlers(self):
        return {
            EventKind.WORLD: self._on_world,
            EventKind.TX_END: self._on_tx_end,
            EventKind.CCA: self._on_cca,
            EventKind.TX_START: self._on_tx_start,
            EventKind.MAC_TIMER: self._on_mac_timer,
            EventKind.NAV_END: lambda nid, _: self._maybe_idle(self.nodes[nid]),
            EventKind.TRAFFIC: self._on_traffic,
            EventKind.BEACON: self._on_beacon_tick,
            EventKind.BEACON_TRY: self._on_beacon_try,
            EventKind.ROUTE_TICK: self._on_route_tick,
            EventKind.METRICS: self._on_metrics,
        }

    def dispatch(self, kind: EventKind, target: int, data: Any = None) -> None:
        """Run one event handler at the current time (used by tests)."""
        self._handlers()[kind](target, data)

    # -------------------------------------------------------------- node helpers

    def backlog(self, node: NodeRuntime) -> int:
        if self.sc.routing.backlog_counts == "general":
            q = len(node.queues.general_queue)
        else:
            q = node.queues.occupancy()
        return q + node.offset

    def self_state(self, node: NodeRuntime) -> SelfState:
        return SelfState(node.id, node.position, node.energy, self.backlog(node))

    def channel_idle(self, node: NodeRuntime) -> bool:
        return node.tx is None and node.busy == 0 and self.now >= node.nav_until

    def _route(self, node: NodeRuntime) -> None:
        if node.queues.general_queue:
            assign_routes(self.self_state(node), node.queues, node.table, self.destinations,
                          self.sc.routing.utility)

    def _pump(self, node: NodeRuntime) -> None:
        if not node.alive or node.mac.phase is not M.Phase.IDLE:
            return
        qs = node.queues
        if not qs.transmit_queue:
            hop = qs.oldest_hop()
            if hop is None:
                return
            M.form_segment(qs, hop, self.cfg.segment_size)
        seg = qs.transmit_queue.popleft()
        qs.in_flight = seg
        self._mac(node, M.SegmentReady(seg))

    def _mac(self, node: NodeRuntime, event) -> None:
        node.mac, actions = M.mac_step(node.mac, event, self.cfg, self.rng, self.now)
        self._apply(node, actions)
        if node.mac.phase is M.Phase.SENSING and self.channel_idle(node) and node.pending_tx == 0:
            node.mac, actions = M.mac_step(node.mac, M.ChannelIdle(), self.cfg, self.rng, self.now)
            self._apply(node, actions)

    def _apply(self, node: NodeRuntime, actions: list) -> None:
        for a in actions:
            if isinstance(a, M.StartTimer):
                self.schedule(self.now + a.duration, EventKind.MAC_TIMER, node.id, (a.kind, a.token))
            elif isinstance(a, M.StartTransmission):
                if a.kind == "RTS":
                    rts_air = frame_airtime(Frame(FrameKind.RTS, node.id, a.dst, self.radio.rts_bytes,
                                                  self.radio.control_rate), self.radio)
                    burst = self._burst_air(a.packets)
                    rts_end = self.now + rts_air
                    payload = {
                        "packets": a.packets,
                        # provisional: lapses unless the DATA burst starts
                        "nav": rts_end + 2 * self.radio.sifs_s + self._cts_air + 2 * self.cfg.slot_time,
                        "exchange": burst,
                    }
                    frame = Frame(FrameKind.RTS, node.id, a.dst, self.radio.rts_bytes,
                                  self.radio.control_rate, payload)
                    node.last_burst = ()
                    self._start_tx(node, [frame])
                else:
                    frames = [Frame(FrameKind.DATA, node.id, a.dst, p.payload_len,
                                    self.radio.data_rate, p) for p in a.packets]
                    node.last_burst = tuple(p.key for p in a.packets)
                    node.pending_tx += 1
                    self.schedule(self.now + self.radio.sifs_s + a.delay, EventKind.TX_START,
                                  node.id, frames)
            elif isinstance(a, M.ReturnSegmentToGeneral):
                seg = a.segment
                node.queues.in_flight = None
                # packets whose custody already moved downstream are not requeued
                mine = [p for p in seg.packets if self.ledger.get(p.key) == node.id]
                node.queues.return_to_general(mine)
                self.trace.add(self.now, node.id, "bounce", seg.next_hop, len(mine))
                self._route(node)
                self._pump(node)
            elif isinstance(a, (M.CompleteSegment, M.DropSegment)):
                node.queues.in_flight = None
                reason = "retry_exhausted" if isinstance(a, M.DropSegment) else "no_arq"
                for p, ok in zip(a.segment.packets, a.delivered):
                    if not ok and self.ledger.get(p.key) == node.id:
                        self._drop(node, p, reason)
                self._pump(node)
            else:  # pragma: no cover
                raise AssertionError(f"unknown action {a!r}")

    def _burst_air(self, packets) -> float:
        r = self.radio
        total = 0.0
        for i, p in enumerate(packets):
            total += r.preamble_s + (p.payload_len + r.data_header_bytes) * 8 / (r.data_rate * 1e6)
        return total + max(0, len(packets) - 1) * r.frame_gap_s

    def _drop(self, node: NodeRuntime, p: Packet, reason: str) -> None:
        self.ledger[p.key] = "dropped"
        self.trace.add(self.now, node.id, "drop", self.session_of.get(p.key, -1), p.seq, reason,
                       f"{p.created_at:.9f}")

    def _admit(self, node: NodeRuntime, p: Packet) -> bool:
        try:
            M.enqueue_outbound(node.queues, p)
        except M.QueueFull:
            self._drop(node, p, "queue_full")
            return False
        self.ledger[p.key] = node.id
        return True

    # -------------------------------------------------------------- transmissions

    def _start_tx(self, node: NodeRuntime, frames: list[Frame]) -> Transmission:
        t = Transmission.build(frames, node.id, self.now, self.radio)
        self.medium.transmit(t)
        node.tx = t
        air = t.end - t.start
        self.airtime += air
        energy_accounting(node.energy, self.radio.tx_power_w, air)
        self.trace.add(self.now, node.id, "tx", t.kind.value, t.dst, len(frames))
        if node.mac.phase is M.Phase.BACKOFF:
            self._mac(node, M.ChannelBusy())
        self.schedule(self.now + self.radio.cca_delay_s, EventKind.CCA, node.id, t)
        self.schedule(t.end, EventKind.TX_END, node.id, t)
        return t

    def _on_tx_start(self, nid: int, frames: list[Frame]) -> None:
        node = self.nodes[nid]
        node.pending_tx -= 1
        if not node.alive:
            return
        self._start_tx(node, frames)

    def _on_cca(self, nid: int, t: Transmission) -> None:
        recs = self.medium.receptions.get(id(t), {})
        sensed = list(recs)
        self._sensed[id(t)] = sensed
        for r in sensed:
            rn = self.nodes[r]
            rn.busy += 1
            if rn.busy == 1 and rn.mac.phase is M.Phase.BACKOFF:
                self._mac(rn, M.ChannelBusy())

    def _on_tx_end(self, nid: int, t: Transmission) -> None:
        node = self.nodes[nid]
        node.tx = None
        recs = self.medium.finish(t)
        sensed = self._sensed.pop(id(t), [])
        for r in sensed:
            self.nodes[r].busy -= 1
        if node.alive and node.energy.depleted:
            node.alive = False
            self.trace.add(self.now, nid, "depleted")
        kind = t.kind
        if node.alive and kind in (FrameKind.RTS, FrameKind.DATA):
            self._mac(node, M.TxDone())
        rx_w = self.radio.rx_power_w
        for rec in recs:
            rn = self.nodes[rec.receiver]
            if not rn.alive:
                continue
            if rx_w > 0:
                energy_accounting(rn.energy, rx_w, t.end - t.start)
            if kind is FrameKind.DATA and rec.receiver != t.dst:
                continue
            outcomes = resolve_reception(self.model, rec, self.rng)
            self._deliver(rn, t, outcomes)
        for r in sensed:
            self._maybe_idle(self.nodes[r])
        self._maybe_idle(node)

    def _maybe_idle(self, node: NodeRuntime) -> None:
        if not node.alive or not self.channel_idle(node) or node.pending_tx:
            return
        if node.mac.phase is M.Phase.SENSING:
            self._mac(node, M.ChannelIdle())
        if node.beacon_pending and not node.beacon_try:
            node.beacon_try = True
            delay = self.cfg.difs + self.rng.randrange(self.cfg.cw_min) * self.cfg.slot_time
            self.schedule(self.now + delay, EventKind.BEACON_TRY, node.id)

    def _set_nav(self, node: NodeRuntime, until: float) -> None:
        if not self.cfg.virtual_carrier_sense or until <= node.nav_until:
            return
        node.nav_until = until
        self.schedule(until, EventKind.NAV_END, node.id)
        if node.mac.phase is M.Phase.BACKOFF:
            self._mac(node, M.ChannelBusy())

    # -------------------------------------------------------------- receive path

    def _deliver(self, rn: NodeRuntime, t: Transmission, outcomes: list[Outcome]) -> None:
        kind = t.kind
        ok0 = outcomes[0] is Outcome.DELIVERED
        if kind is FrameKind.BEACON:
            if ok0:
                ingest_beacon(rn.table, t.frame.payload, self.now, self.sc.routing.alpha)
                self._route(rn)
                self._pump(rn)
            return
        if kind is FrameKind.DATA:
            view = M.FrameView("DATA", t.tx, t.dst, t.end,
                               packets=tuple(f.payload for f in t.frames),
                               delivered=tuple(o is Outcome.DELIVERED for o in outcomes))
        elif not ok0:
            return
        elif kind is FrameKind.RTS:
            pl = t.frame.payload
            view = M.FrameView("RTS", t.tx, t.dst, t.end, nav_until=pl["nav"],
                               packets=pl["packets"])
        elif kind is FrameKind.CTS:
            if t.dst == rn.id:
                self._mac(rn, M.CtsReceived(t.tx))
                return
            view = M.FrameView("CTS", t.tx, t.dst, t.end, nav_until=t.frame.payload)
        else:  # BLOCK_ACK
            if t.dst == rn.id:
                self._on_block_ack(rn, t.tx, t.frame.payload)
            return
        can_reply = rn.tx is None and rn.pending_tx == 0 and self.now >= rn.nav_until
        seen = None
        if kind is FrameKind.DATA:
            # a copy is new only while the sender still has custody; a retransmission
            # after a lost block ack, or a packet coming back around a loop, is judged
            # by where custody actually sits rather than by what this node remembers
            seen = {p.key for p in view.packets if self.ledger.get(p.key) != t.tx}
        for a in M.on_control_frame(rn.id, rn.mac, view, self.radio.sifs_s, can_reply, seen):
            if isinstance(a, M.SetNav):
                self._set_nav(rn, a.until)
            elif isinstance(a, M.SendCts):
                nav = (self.now + a.delay + self._cts_air + self.radio.sifs_s
                       + t.frame.payload["exchange"] + self.radio.sifs_s + self._ba_air)
                frame = Frame(FrameKind.CTS, rn.id, a.dst, self.radio.cts_bytes,
                              self.radio.control_rate, nav)
                rn.pending_tx += 1
                self.schedule(self.now + a.delay, EventKind.TX_START, rn.id, [frame])
            elif isinstance(a, M.AcceptPackets):
                self._accept(rn, a.src, a.packets)
            elif isinstance(a, M.SendBlockAck):
                frame = Frame(FrameKind.BLOCK_ACK, rn.id, a.dst, self.radio.block_ack_bytes,
                              self.radio.control_rate, a.delivered)
                rn.pending_tx += 1
                self.schedule(self.now + a.delay, EventKind.TX_START, rn.id, [frame])

    def _accept(self, rn: NodeRuntime, sender: int, packets) -> None:
        routed_any = False
        for p in packets:
            if self.ledger.get(p.key) != sender:
                continue
            self.ledger[p.key] = rn.id
            self.nodes[sender].forwarded += 1
            self.trace.add(self.now, rn.id, "fwd", sender, p.src, p.seq)
            if p.dst == rn.id:
                self.ledger[p.key] = "delivered"
                self.trace.add(self.now, rn.id, "deliver", sender, self.session_of.get(p.key, -1),
                               p.seq, p.payload_len, f"{p.created_at:.9f}")
            else:
                routed_any |= self._admit(rn, dataclasses.replace(p, assigned_next_hop=None))
        if routed_any:
            self._route(rn)
            self._pump(rn)

    def _on_block_ack(self, node: NodeRuntime, src: int, keys) -> None:
        acked = set(keys)
        rec = node.table.records.get(src)
        if rec is not None:
            alpha = self.sc.routing.alpha
            for k in node.last_burst:
                update_link_quality(rec, k in acked, alpha)
        self._mac(node, M.BlockAckReceived(src, tuple(keys)))

    # -------------------------------------------------------------- timers & ticks

    def _on_mac_timer(self, nid: int, data) -> None:
        node = self.nodes[nid]
        if not node.alive:
            return
        kind, token = data
        if token != node.mac.timer_token:
            return
        if kind in (M.TimerKind.CTS_TIMEOUT, M.TimerKind.ACK_TIMEOUT) and node.mac.current_segment:
            rec = node.table.records.get(node.mac.current_segment.next_hop)
            if rec is not None:
                update_link_quality(rec, False, self.sc.routing.alpha)
        self._mac(node, M.Timeout(kind, token))

    def _on_traffic(self, nid: int, idx: int) -> None:
        s = self.sc.sessions[idx]
        if not self.session_on[idx] or self.now >= s.stop:
            self.session_scheduled[idx] = False
            return
        seq = self.next_seq.get(s.src, 0)
        self.next_seq[s.src] = seq + 1
        pkt, nxt = generate_traffic(s, self.now, seq, self.rng, self.sc.traffic.jitter)
        self.session_of[pkt.key] = idx
        self.trace.add(self.now, s.src, "gen", idx, seq, s.dst)
        node = self.nodes[s.src]
        if self._admit(node, pkt):
            self._route(node)
            self._pump(node)
        if nxt < s.stop:
            self.schedule(nxt, EventKind.TRAFFIC, s.src, idx)
        else:
            self.session_scheduled[idx] = False

    def _on_beacon_tick(self, nid: int, _) -> None:
        node = self.nodes[nid]
        self.schedule(self.now + self.sc.routing.beacon_period, EventKind.BEACON, nid)
        if not node.alive:
            return
        node.beacon_pending = True
        self._maybe_idle(node)

    def _on_beacon_try(self, nid: int, _) -> None:
        node = self.nodes[nid]
        node.beacon_try = False
        if not (node.alive and node.beacon_pending and self.channel_idle(node)
                and node.pending_tx == 0 and node.mac.phase in M.RECEPTIVE):
            return
        node.beacon_pending = False
        beacon = build_beacon(self.self_state(node), self.now)
        frame = Frame(FrameKind.BEACON, nid, BROADCAST, self.radio.beacon_bytes,
                      self.radio.control_rate, beacon)
        self._start_tx(node, [frame])

    def _on_route_tick(self, nid: int, _) -> None:
        node = self.nodes[nid]
        self.schedule(self.now + self.sc.routing.route_tick, EventKind.ROUTE_TICK, nid)
        if not node.alive:
            return
        evict_stale(node.table, self.now)
        self._route(node)
        self._pump(node)

    def _on_metrics(self, _nid, _data) -> None:
        for node in self.nodes.values():
            self.samples.append((self.now, node.id, self.backlog(node)))
        self.schedule(self.now + self.sc.sim.metrics_tick, EventKind.METRICS, -1)

    def _on_world(self, _nid, ev) -> None:
        a = ev.action
        self.trace.add(self.now, ev.node if ev.node is not None else -1, "world", a,
                       ev.count, ev.ratio,
                       None if ev.position is None else f"{ev.position.x:.3f},{ev.position.y:.3f}",
                       ev.session)
        if a == "set_backlog_offset":
            self.nodes[ev.node].offset = ev.count
        elif a == "set_residual_energy":
            node = self.nodes[ev.node]
            node.energy.set_ratio(ev.ratio)
            node.alive = not node.energy.depleted
        elif a == "move_node":
            node = self.nodes[ev.node]
            node.position = ev.position
            self.medium.move(ev.node, ev.position)
            if ev.node in self.destinations:
                self.destinations[ev.node] = ev.position
        elif a == "stop_session":
            self.session_on[ev.session] = False
        elif a == "start_session":
            self.session_on[ev.session] = True
            s = self.sc.sessions[ev.session]
            if not self.session_scheduled[ev.session] and self.now < s.stop:
                self.session_scheduled[ev.session] = True
                self.schedule(max(self.now, s.start), EventKind.TRAFFIC, s.src, ev.session)

    def _finish(self) -> None:
        held = sum(1 for v in self.ledger.values() if isinstance(v, int))
        self.trace.add(self.now, -1, "end", held, f"{self.airtime:.9f}", self.dispatched)

    # -------------------------------------------------------------- inspection

    def conservation(self) -> dict[str, int]:
        gen = len(self.session_of)
        delivered = sum(1 for v in self.ledger.values() if v == "delivered")
        dropped = sum(1 for v in self.ledger.values() if v == "dropped")
        held = sum(1 for v in self.ledger.values() if isinstance(v, int))
        queued = sum(len(n.queues.all_packets()) for n in self.nodes.values())
        # held packets that are not in their holder's queues (should never happen)
        present = {(n.id, p.key) for n in self.nodes.values() for p in n.queues.all_packets()}
        orphaned = sum(1 for k, v in self.ledger.items()
                       if isinstance(v, int) and (v, k) not in present)
        return {"generated": gen, "delivered": delivered, "dropped": dropped,
                "held": held, "queued": queued, "orphaned": orphaned}


def run(scenario: Scenario, seed: Optional[int] = None):
    """Run ``scenario`` to completion; returns ``(MetricsReport, EventTrace)``."""
    from .metrics import summarize

    sim = Simulator(scenario, scenario.sim.seed if seed is None else seed)
    trace = sim.run()
    report = summarize(trace, scenario)
    report.conservation = sim.conservation()
    report.seed = sim.seed
    return report, trace
