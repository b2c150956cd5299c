"""CSMA/CA channel access with an RTS/CTS handshake, segment bursts and block-ACK ARQ.

The sender side is a pure transition function, :func:`mac_step`, fed by the
event loop. The receiver side (:func:`on_control_frame`) turns delivered frames
into replies. Neither owns timers or threads; they only emit actions.
"""

from __future__ import annotations

import dataclasses
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .model import DEFAULT_SEGMENT_SIZE, NodeId, Packet, Segment


class QueueFull(Exception):
    pass


class IllegalTransition(AssertionError):
    pass


@dataclass
class MacConfig:
    slot_time: float = 20e-6
    difs: float = 50e-6
    cw_min: int = 16
    cw_max: int = 1024
    # measured from the end of our own RTS / DATA burst
    cts_timeout: float = 500e-6
    ack_timeout: float = 600e-6
    max_rts_retries: int = 4
    max_data_retries: int = 7
    arq_enabled: bool = True
    queue_capacity: int = 2000
    segment_size: int = DEFAULT_SEGMENT_SIZE
    virtual_carrier_sense: bool = True

    def __post_init__(self):
        if not 0 < self.cw_min <= self.cw_max:
            raise ValueError("need 0 < cw_min <= cw_max")
        if self.cts_timeout <= 0 or self.ack_timeout <= 0:
            raise ValueError("timeouts must be positive")
        if self.segment_size < 1:
            raise ValueError("segment_size must be at least 1")


# ---------------------------------------------------------------- queues


class QueuePair:
    """General Queue of unrouted packets plus the route-assigned pool feeding segments.

    Routed packets are kept per next hop so that segment formation is
    order-preserving per hop. ``transmit_queue`` holds formed segments that
    are waiting for the channel.
    """

    def __init__(self, capacity: int = 2000):
        self.capacity = capacity
        self.general_queue: deque[Packet] = deque()
        self.routed: dict[NodeId, deque[tuple[int, Packet]]] = {}
        self.transmit_queue: deque[Segment] = deque()
        self.in_flight: Optional[Segment] = None
        self._order = 0
        self._routed_count = 0

    def occupancy(self) -> int:
        n = len(self.general_queue) + self._routed_count
        n += sum(len(s) for s in self.transmit_queue)
        if self.in_flight is not None:
            n += len(self.in_flight)
        return n

    def routed_count(self) -> int:
        return self._routed_count

    def route(self, packet: Packet, next_hop: NodeId) -> None:
        packet.assigned_next_hop = next_hop
        self.routed.setdefault(next_hop, deque()).append((self._order, packet))
        self._order += 1
        self._routed_count += 1

    def return_to_general(self, packets: list[Packet]) -> None:
        """Put bounced packets back at the head of the General Queue, order kept."""
        for p in reversed(packets):
            p.assigned_next_hop = None
            self.general_queue.appendleft(p)

    def oldest_hop(self) -> Optional[NodeId]:
        best = None
        for hop, pool in self.routed.items():
            if pool and (best is None or pool[0][0] < best[0]):
                best = (pool[0][0], hop)
        return None if best is None else best[1]

    def all_packets(self) -> list[Packet]:
        out = list(self.general_queue)
        for pool in self.routed.values():
            out.extend(p for _, p in pool)
        for s in self.transmit_queue:
            out.extend(s.packets)
        if self.in_flight is not None:
            out.extend(self.in_flight.packets)
        return out


def enqueue_outbound(queues: QueuePair, packet: Packet) -> None:
    """Admit a packet into the General Queue; raises QueueFull at capacity."""
    if queues.occupancy() >= queues.capacity:
        raise QueueFull(f"queue at capacity {queues.capacity}")
    packet.assigned_next_hop = None
    queues.general_queue.append(packet)


def form_segment(queues: QueuePair, next_hop: NodeId,
                 segment_size: int = DEFAULT_SEGMENT_SIZE) -> Optional[Segment]:
    """Group up to ``segment_size`` routed packets for ``next_hop`` into a segment.

    A short segment is formed as soon as the pool for that hop is nonempty.
    The segment is appended to the transmit queue and returned.
    """
    pool = queues.routed.get(next_hop)
    if not pool:
        return None
    take = [pool.popleft()[1] for _ in range(min(segment_size, len(pool)))]
    if not pool:
        del queues.routed[next_hop]
    queues._routed_count -= len(take)
    seg = Segment(take, next_hop)
    queues.transmit_queue.append(seg)
    return seg


# ---------------------------------------------------------------- sender FSM


class Phase(str, Enum):
    IDLE = "IDLE"
    SENSING = "SENSING"
    BACKOFF = "BACKOFF"
    AWAIT_CTS = "AWAIT_CTS"
    TX_DATA = "TX_DATA"
    AWAIT_ACK = "AWAIT_ACK"


class TimerKind(str, Enum):
    BACKOFF = "backoff"
    CTS_TIMEOUT = "cts_timeout"
    ACK_TIMEOUT = "ack_timeout"
    DATA_STALL = "data_stall"


@dataclass(frozen=True)
class SegmentReady:
    segment: Segment


@dataclass(frozen=True)
class ChannelIdle:
    pass


@dataclass(frozen=True)
class ChannelBusy:
    pass


@dataclass(frozen=True)
class CtsReceived:
    src: NodeId


@dataclass(frozen=True)
class BlockAckReceived:
    src: NodeId
    delivered: tuple[tuple[int, int], ...]  # packet keys acknowledged


@dataclass(frozen=True)
class Timeout:
    kind: TimerKind
    token: int


@dataclass(frozen=True)
class TxDone:
    pass


MacEvent = Union[SegmentReady, ChannelIdle, ChannelBusy, CtsReceived,
                 BlockAckReceived, Timeout, TxDone]


@dataclass(frozen=True)
class StartTransmission:
    kind: str  # "RTS" | "DATA"
    dst: NodeId
    packets: tuple[Packet, ...] = ()
    delay: float = 0.0


@dataclass(frozen=True)
class StartTimer:
    kind: TimerKind
    duration: float
    token: int


@dataclass(frozen=True)
class ReturnSegmentToGeneral:
    segment: Segment


@dataclass(frozen=True)
class CompleteSegment:
    segment: Segment
    delivered: tuple[bool, ...]


@dataclass(frozen=True)
class DropSegment:
    segment: Segment
    delivered: tuple[bool, ...]


Action = Union[StartTransmission, StartTimer, ReturnSegmentToGeneral,
               CompleteSegment, DropSegment]


@dataclass
class MacState:
    phase: Phase = Phase.IDLE
    backoff_slots_remaining: Optional[int] = None
    contention_window: int = 16
    current_segment: Optional[Segment] = None
    pending_bitmap: list[bool] = field(default_factory=list)
    countdown_from: float = 0.0
    timer_token: int = 0

    @classmethod
    def initial(cls, config: MacConfig) -> "MacState":
        return cls(contention_window=config.cw_min)

    def pending_packets(self) -> tuple[Packet, ...]:
        seg = self.current_segment
        assert seg is not None
        return tuple(p for p, ok in zip(seg.packets, self.pending_bitmap) if not ok)


def _timer(state: MacState, kind: TimerKind, duration: float) -> StartTimer:
    state.timer_token += 1
    return StartTimer(kind, duration, state.timer_token)


def _finish(state: MacState, config: MacConfig) -> None:
    state.phase = Phase.IDLE
    state.current_segment = None
    state.pending_bitmap = []
    state.backoff_slots_remaining = None
    state.contention_window = config.cw_min
    state.timer_token += 1


def _recontend(state: MacState) -> None:
    state.phase = Phase.SENSING
    state.backoff_slots_remaining = None
    state.timer_token += 1


def _data_failure(state: MacState, config: MacConfig) -> list[Action]:
    """Some packets still missing after an exchange; retry or give up."""
    seg = state.current_segment
    assert seg is not None
    bitmap = tuple(state.pending_bitmap)
    if not config.arq_enabled:
        _finish(state, config)
        return [CompleteSegment(seg, bitmap)]
    if seg.retries_data >= config.max_data_retries:
        _finish(state, config)
        return [DropSegment(seg, bitmap)]
    seg.retries_data += 1
    _recontend(state)
    return []


def mac_step(state: MacState, event: MacEvent, config: MacConfig,
             rng: random.Random, now: float) -> tuple[MacState, list[Action]]:
    """Advance the sender state machine by one event.

    Returns the successor state (a fresh object; ``state`` is left untouched)
    and the actions the event loop must carry out. Stale timer expiries are
    ignored; any other event that makes no sense in the current phase raises
    IllegalTransition.
    """
    s = dataclasses.replace(state, pending_bitmap=list(state.pending_bitmap))
    ph = s.phase
    actions: list[Action] = []

    if isinstance(event, Timeout) and event.token != s.timer_token:
        return s, []

    if isinstance(event, SegmentReady):
        if ph is not Phase.IDLE:
            raise IllegalTransition(f"SegmentReady in {ph}")
        s.current_segment = event.segment
        s.pending_bitmap = [False] * len(event.segment)
        _recontend(s)

    elif isinstance(event, ChannelIdle):
        if ph is Phase.SENSING:
            if s.backoff_slots_remaining is None:
                s.backoff_slots_remaining = rng.randrange(s.contention_window)
            s.phase = Phase.BACKOFF
            s.countdown_from = now + config.difs
            actions.append(_timer(s, TimerKind.BACKOFF,
                                  config.difs + s.backoff_slots_remaining * config.slot_time))

    elif isinstance(event, ChannelBusy):
        if ph is Phase.BACKOFF:
            elapsed = now - s.countdown_from
            if elapsed > 0:
                # a slot only counts once fully idle
                done = int(elapsed / config.slot_time + 1e-9)
                s.backoff_slots_remaining = max(0, s.backoff_slots_remaining - done)
            s.phase = Phase.SENSING
            s.timer_token += 1

    elif isinstance(event, Timeout):
        if event.kind is TimerKind.BACKOFF:
            if ph is not Phase.BACKOFF:
                raise IllegalTransition(f"backoff expiry in {ph}")
            seg = s.current_segment
            s.phase = Phase.AWAIT_CTS
            s.backoff_slots_remaining = None
            actions.append(StartTransmission("RTS", seg.next_hop, s.pending_packets()))
        else:
            s, more = on_timeout(s, event.kind, config)
            actions.extend(more)

    elif isinstance(event, TxDone):
        if ph is Phase.AWAIT_CTS:
            actions.append(_timer(s, TimerKind.CTS_TIMEOUT, config.cts_timeout))
        elif ph is Phase.TX_DATA:
            s.phase = Phase.AWAIT_ACK
            kind = TimerKind.ACK_TIMEOUT if config.arq_enabled else TimerKind.DATA_STALL
            actions.append(_timer(s, kind, config.ack_timeout))
        else:
            raise IllegalTransition(f"TxDone in {ph}")

    elif isinstance(event, CtsReceived):
        seg = s.current_segment
        if ph is Phase.AWAIT_CTS and seg is not None and event.src == seg.next_hop:
            s.phase = Phase.TX_DATA
            s.timer_token += 1
            actions.append(StartTransmission("DATA", seg.next_hop, s.pending_packets()))

    elif isinstance(event, BlockAckReceived):
        seg = s.current_segment
        if ph is Phase.AWAIT_ACK and seg is not None and event.src == seg.next_hop:
            acked = set(event.delivered)
            s.pending_bitmap = [ok or p.key in acked
                                for p, ok in zip(seg.packets, s.pending_bitmap)]
            s.timer_token += 1
            if all(s.pending_bitmap):
                bitmap = tuple(s.pending_bitmap)
                _finish(s, config)
                actions.append(CompleteSegment(seg, bitmap))
            else:
                s.contention_window = config.cw_min
                actions.extend(_data_failure(s, config))
    else:
        raise IllegalTransition(f"unknown event {event!r}")

    return s, actions


def on_timeout(state: MacState, kind: TimerKind,
               config: MacConfig) -> tuple[MacState, list[Action]]:
    """Handle an expired CTS/ACK/stall timer that is still current."""
    s = state
    seg = s.current_segment
    if kind is TimerKind.CTS_TIMEOUT:
        if s.phase is not Phase.AWAIT_CTS:
            return s, []
        if seg.retries_rts >= config.max_rts_retries:
            _finish(s, config)
            return s, [ReturnSegmentToGeneral(seg)]
        seg.retries_rts += 1
        s.contention_window = min(2 * s.contention_window, config.cw_max)
        _recontend(s)
        return s, []
    if kind in (TimerKind.ACK_TIMEOUT, TimerKind.DATA_STALL):
        if s.phase is not Phase.AWAIT_ACK:
            return s, []
        if kind is TimerKind.ACK_TIMEOUT:
            s.contention_window = min(2 * s.contention_window, config.cw_max)
        return s, _data_failure(s, config)
    raise IllegalTransition(f"unexpected timer {kind}")


# ---------------------------------------------------------------- receiver side


@dataclass(frozen=True)
class SendCts:
    dst: NodeId
    packets: int
    delay: float


@dataclass(frozen=True)
class SendBlockAck:
    dst: NodeId
    delivered: tuple[tuple[int, int], ...]
    delay: float


@dataclass(frozen=True)
class SetNav:
    until: float


@dataclass(frozen=True)
class AcceptPackets:
    src: NodeId
    packets: tuple[Packet, ...]


@dataclass(frozen=True)
class FrameView:
    """What a receiver learned from one delivered (or partially delivered) transmission."""

    kind: str
    src: NodeId
    dst: NodeId
    end: float
    nav_until: float = 0.0
    packets: tuple[Packet, ...] = ()
    delivered: tuple[bool, ...] = ()


RECEPTIVE = (Phase.IDLE, Phase.SENSING, Phase.BACKOFF)


def on_control_frame(me: NodeId, state: MacState, frame: FrameView, sifs: float,
                     can_reply: bool = True,
                     seen: Optional[set] = None) -> list:
    """Receiver reactions: CTS to RTS, block ACK to DATA, deferral for overheard frames.

    ``seen`` holds packet keys this node already accepted; duplicates are
    acknowledged but not accepted twice.
    """
    out: list = []
    if frame.dst != me:
        if frame.kind in ("RTS", "CTS") and frame.nav_until > frame.end:
            out.append(SetNav(frame.nav_until))
        return out
    if frame.kind == "RTS":
        if can_reply and state.phase in RECEPTIVE:
            out.append(SendCts(frame.src, len(frame.packets), sifs))
    elif frame.kind == "DATA":
        got = [p for p, ok in zip(frame.packets, frame.delivered) if ok]
        if not got:
            return out
        fresh = []
        for p in got:
            if seen is None or p.key not in seen:
                fresh.append(p)
                if seen is not None:
                    seen.add(p.key)
        if fresh:
            out.append(AcceptPackets(frame.src, tuple(fresh)))
        if can_reply:
            out.append(SendBlockAck(frame.src, tuple(p.key for p in got), sifs))
    return out
