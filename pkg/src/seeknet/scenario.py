"""Scenario documents: strict JSON parsing, defaults and referential validation.

A scenario is a JSON object with the sections ``nodes``, ``sessions``,
``radio``, ``mac``, ``routing``, ``traffic``, ``world_events`` and ``sim``.
Only ``nodes`` and ``sessions`` are required; everything else falls back to
the documented defaults (1000 B payload, 32-packet segments, 1 Mbps).
Unknown keys are rejected with the offending path.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .mac import MacConfig
from .model import (DEFAULT_PAYLOAD_BYTES, EnergyState, GeoPosition, NodeConfig,
                    NonPositiveDuration, Role, ScenarioError, Session,
                    UnknownSessionEndpoint, WorldEvent, check_rate, from_lat_lon,
                    validate_ids)
from .phy import LinkModel, RadioConfig, default_calibration


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class SchemaError(ScenarioError):
    def __init__(self, path: str, expected: str):
        super().__init__(f"{path}: expected {expected}")
        self.path = path
        self.expected = expected


@dataclass
class RoutingConfig:
    utility: str = "seek"
    alpha: float = 0.1
    beacon_period: float = 1.0
    staleness_periods: float = 3.0
    route_tick: float = 0.5
    # "all": General Queue + routed pool + segments in flight; "general": General Queue only
    backlog_counts: str = "all"


@dataclass
class TrafficConfig:
    jitter: float = 0.1


@dataclass
class SimConfig:
    duration: float = 300.0
    seed: int = 1
    metrics_tick: float = 1.0
    warmup: float = 30.0
    bin: float = 10.0
    window: float = 60.0


@dataclass
class Scenario:
    nodes: list[NodeConfig]
    sessions: list[Session]
    radio: RadioConfig = field(default_factory=RadioConfig)
    link_model: LinkModel = field(default_factory=LinkModel)
    mac: MacConfig = field(default_factory=MacConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    world_events: list[WorldEvent] = field(default_factory=list)
    sim: SimConfig = field(default_factory=SimConfig)
    name: str = "scenario"

    def node(self, node_id: int) -> NodeConfig:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


# ------------------------------------------------------------------ parsing

_NODE_KEYS = {"id", "x", "y", "lat", "lon", "altitude", "role", "energy_j",
              "residual_j", "backlog_offset", "name"}
_SESSION_KEYS = {"src", "dst", "rate", "payload_bytes", "start", "stop"}
_EVENT_KEYS = {"at", "action", "node", "count", "ratio", "x", "y", "session"}
_LINK_KEYS = {"cutoff_m", "one_mbps_robustness", "calibration", "pinned_p"}
_TOP_KEYS = {"name", "description", "origin", "nodes", "sessions", "radio", "mac",
             "routing", "traffic", "world_events", "sim", "energy_j"}


def _expect(cond: bool, path: str, expected: str) -> None:
    if not cond:
        raise SchemaError(path, expected)


def _number(v: Any, path: str) -> float:
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), path, "a number")
    _expect(math.isfinite(v), path, "a finite number")
    return v


def _int(v: Any, path: str) -> int:
    _expect(isinstance(v, int) and not isinstance(v, bool), path, "an integer")
    return v


def _strict_keys(obj: Any, allowed: set[str], path: str) -> dict:
    _expect(isinstance(obj, dict), path, "an object")
    for k in obj:
        if k not in allowed:
            raise SchemaError(f"{path}.{k}", f"one of {sorted(allowed)} (unknown field)")
    return obj


def _fill_dataclass(cls, obj: Any, path: str, rename: Optional[dict] = None):
    """Build a config dataclass from a JSON object, rejecting unknown fields."""
    rename = rename or {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    allowed = set(names) | set(rename)
    obj = _strict_keys(obj, allowed, path)
    kwargs = {}
    for k, v in obj.items():
        name = rename.get(k, k)
        default = getattr(cls(), name)
        p = f"{path}.{k}"
        if isinstance(default, bool):
            _expect(isinstance(v, bool), p, "a boolean")
        elif isinstance(default, int):
            v = _int(v, p)
        elif isinstance(default, float):
            v = float(_number(v, p))
        elif isinstance(default, str):
            _expect(isinstance(v, str), p, "a string")
        kwargs[name] = v
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise SchemaError(path, str(e)) from None


def _position(obj: dict, path: str, origin: Optional[tuple[float, float]]) -> GeoPosition:
    alt = obj.get("altitude")
    if alt is not None:
        alt = float(_number(alt, f"{path}.altitude"))
    if "lat" in obj or "lon" in obj:
        _expect("lat" in obj and "lon" in obj, path, "both lat and lon")
        _expect("x" not in obj and "y" not in obj, path, "either x/y or lat/lon, not both")
        lat = _number(obj["lat"], f"{path}.lat")
        lon = _number(obj["lon"], f"{path}.lon")
        ref = origin or (lat, lon)
        p = from_lat_lon(lat, lon, *ref)
        return GeoPosition(p.x, p.y, alt)
    _expect("x" in obj and "y" in obj, path, "x and y (meters) or lat and lon")
    return GeoPosition(float(_number(obj["x"], f"{path}.x")),
                       float(_number(obj["y"], f"{path}.y")), alt)


def _link_model(obj: Any, path: str, radio: RadioConfig) -> LinkModel:
    obj = _strict_keys(obj, _LINK_KEYS, path)
    cutoff = float(_number(obj.get("cutoff_m", 1942.0), f"{path}.cutoff_m"))
    if "pinned_p" in obj:
        p = float(_number(obj["pinned_p"], f"{path}.pinned_p"))
        _expect(0 <= p <= 1, f"{path}.pinned_p", "a probability in [0, 1]")
        m = LinkModel.pinned(p, cutoff_distance=cutoff)
        m.control_rate = radio.control_rate
        return m
    robust = float(_number(obj.get("one_mbps_robustness", 0.5), f"{path}.one_mbps_robustness"))
    table = default_calibration(robust)
    if "calibration" in obj:
        cal = obj["calibration"]
        _expect(isinstance(cal, dict), f"{path}.calibration", "an object keyed by rate (Mbps)")
        for rate_s, rows in cal.items():
            rp = f"{path}.calibration.{rate_s}"
            try:
                rate = float(rate_s)
            except ValueError:
                raise SchemaError(rp, "a numeric rate key") from None
            _expect(isinstance(rows, list) and rows, rp, "a non-empty list of [distance_m, probability]")
            parsed = []
            for i, row in enumerate(rows):
                _expect(isinstance(row, list) and len(row) == 2, f"{rp}[{i}]", "[distance_m, probability]")
                parsed.append((float(_number(row[0], f"{rp}[{i}][0]")),
                               float(_number(row[1], f"{rp}[{i}][1]"))))
            table[rate] = parsed
    try:
        return LinkModel(table, cutoff, radio.control_rate)
    except ValueError as e:
        raise SchemaError(path, str(e)) from None


def _world_event(obj: Any, path: str, origin) -> WorldEvent:
    obj = _strict_keys(obj, _EVENT_KEYS, path)
    _expect("at" in obj and "action" in obj, path, "fields 'at' and 'action'")
    action = obj["action"]
    _expect(action in WorldEvent.ACTIONS, f"{path}.action", f"one of {list(WorldEvent.ACTIONS)}")
    ev = WorldEvent(float(_number(obj["at"], f"{path}.at")), action)
    if action in ("set_backlog_offset", "set_residual_energy", "move_node"):
        ev.node = _int(obj.get("node"), f"{path}.node")
    if action == "set_backlog_offset":
        ev.count = _int(obj.get("count"), f"{path}.count")
        _expect(ev.count >= 0, f"{path}.count", "a non-negative packet count")
    elif action == "set_residual_energy":
        ev.ratio = float(_number(obj.get("ratio"), f"{path}.ratio"))
        _expect(0 <= ev.ratio <= 1, f"{path}.ratio", "a ratio in [0, 1]")
    elif action == "move_node":
        ev.position = _position(obj, path, origin)
    else:
        ev.session = _int(obj.get("session"), f"{path}.session")
    return ev


def scenario_from_dict(doc: Any) -> Scenario:
    doc = _strict_keys(doc, _TOP_KEYS, "$")
    origin = None
    if "origin" in doc:
        o = _strict_keys(doc["origin"], {"lat", "lon"}, "$.origin")
        origin = (_number(o.get("lat"), "$.origin.lat"), _number(o.get("lon"), "$.origin.lon"))
    default_energy = float(_number(doc.get("energy_j", 1000.0), "$.energy_j"))

    _expect(isinstance(doc.get("nodes"), list) and doc["nodes"], "$.nodes", "a non-empty list")
    nodes = []
    for i, n in enumerate(doc["nodes"]):
        p = f"$.nodes[{i}]"
        n = _strict_keys(n, _NODE_KEYS, p)
        _expect("id" in n, p, "an 'id' field")
        nid = _int(n["id"], f"{p}.id")
        _expect(nid >= 0, f"{p}.id", "a non-negative integer")
        e0 = float(_number(n.get("energy_j", default_energy), f"{p}.energy_j"))
        er = float(_number(n.get("residual_j", e0), f"{p}.residual_j"))
        try:
            energy = EnergyState(e0, er)
        except ValueError as e:
            raise SchemaError(p, str(e)) from None
        role = n.get("role", "relay")
        _expect(role in [r.value for r in Role], f"{p}.role", "source | relay | gateway")
        offset = _int(n.get("backlog_offset", 0), f"{p}.backlog_offset")
        nodes.append(NodeConfig(nid, _position(n, p, origin), energy, Role(role), offset))

    _expect(isinstance(doc.get("sessions", []), list), "$.sessions", "a list")
    sessions = []
    for i, s in enumerate(doc.get("sessions", [])):
        p = f"$.sessions[{i}]"
        s = _strict_keys(s, _SESSION_KEYS, p)
        for k in ("src", "dst", "rate"):
            _expect(k in s, p, f"a '{k}' field")
        try:
            sessions.append(Session(
                _int(s["src"], f"{p}.src"), _int(s["dst"], f"{p}.dst"),
                float(_number(s["rate"], f"{p}.rate")),
                _int(s.get("payload_bytes", DEFAULT_PAYLOAD_BYTES), f"{p}.payload_bytes"),
                float(_number(s.get("start", 0.0), f"{p}.start")),
                float(_number(s["stop"], f"{p}.stop")) if "stop" in s else math.inf))
        except ValueError as e:
            raise SchemaError(p, str(e)) from None
        _expect(sessions[-1].payload_bytes > 0, f"{p}.payload_bytes", "a positive byte count")

    radio_doc = dict(doc.get("radio", {}))
    _expect(isinstance(radio_doc, dict), "$.radio", "an object")
    link_doc = radio_doc.pop("link_model", {})
    radio_beacon = radio_doc.pop("beacon_period", None)
    radio = _fill_dataclass(RadioConfig, radio_doc, "$.radio")
    link = _link_model(link_doc, "$.radio.link_model", radio)
    mac = _fill_dataclass(MacConfig, doc.get("mac", {}), "$.mac")
    routing_doc = doc.get("routing", {})
    if radio_beacon is not None:
        _expect(isinstance(routing_doc, dict) and "beacon_period" not in routing_doc,
                "$.radio.beacon_period", "to be given once (radio or routing, not both)")
        routing_doc = {**routing_doc, "beacon_period": radio_beacon}
    routing = _fill_dataclass(RoutingConfig, routing_doc, "$.routing")
    _expect(routing.beacon_period > 0, "$.routing.beacon_period", "a positive period")
    _expect(routing.backlog_counts in ("all", "general"), "$.routing.backlog_counts", "'all' or 'general'")
    traffic = _fill_dataclass(TrafficConfig, doc.get("traffic", {}), "$.traffic")
    _expect(0 <= traffic.jitter < 1, "$.traffic.jitter", "a fraction in [0, 1)")
    sim = _fill_dataclass(SimConfig, doc.get("sim", {}), "$.sim")

    _expect(isinstance(doc.get("world_events", []), list), "$.world_events", "a list")
    events = [_world_event(e, f"$.world_events[{i}]", origin)
              for i, e in enumerate(doc.get("world_events", []))]
    name = doc.get("name", "scenario")
    _expect(isinstance(name, str), "$.name", "a string")
    return Scenario(nodes, sessions, radio, link, mac, routing, traffic, events, sim, name)


def parse_document(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioSyntaxError(e.msg, e.lineno, e.colno) from None


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    return validate_scenario(scenario_from_dict(parse_document(text)))


def load_document(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return parse_document(fh.read())


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def validate_scenario(s: Scenario) -> Scenario:
    """Referential and range checks; returns ``s`` unchanged when they all hold."""
    ids = validate_ids(s.nodes)
    if not s.sim.duration > 0:
        raise NonPositiveDuration(f"duration {s.sim.duration} must be positive")
    if not 0 <= s.sim.warmup < s.sim.duration:
        raise ScenarioError(f"warmup {s.sim.warmup} must lie in [0, duration)")
    check_rate(s.radio.data_rate)
    check_rate(s.radio.control_rate)
    for i, sess in enumerate(s.sessions):
        for end in (sess.src, sess.dst):
            if end not in ids:
                raise UnknownSessionEndpoint(f"session {i} references unknown node {end}")
        if sess.src == sess.dst:
            raise ScenarioError(f"session {i} has src == dst")
    for i, ev in enumerate(s.world_events):
        if not 0 <= ev.at <= s.sim.duration:
            raise ScenarioError(f"world event {i} at {ev.at} outside [0, duration]")
        if ev.node is not None and ev.node not in ids:
            raise UnknownSessionEndpoint(f"world event {i} references unknown node {ev.node}")
        if ev.session is not None and not 0 <= ev.session < len(s.sessions):
            raise ScenarioError(f"world event {i} references unknown session {ev.session}")
    for rate in {s.radio.data_rate, s.radio.control_rate}:
        if rate not in s.link_model.calibration:
            raise ScenarioError(f"link model has no calibration for {rate} Mbps")
    return s


# ------------------------------------------------------------------ sweep paths

_PATH_TOKEN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)|\[(\d+)\]|(\d+)")


def set_path(doc: dict, path: str, value: Any) -> dict:
    """Return a copy of ``doc`` with ``path`` (e.g. ``sessions[0].payload_bytes``) set."""
    tokens = []
    for part in path.split("."):
        for m in _PATH_TOKEN.finditer(part):
            tokens.append(m.group(1) if m.group(1) is not None else int(m.group(2) or m.group(3)))
    if not tokens:
        raise SchemaError(path, "a dotted parameter path")
    out = copy.deepcopy(doc)
    cur: Any = out
    for tok in tokens[:-1]:
        if isinstance(tok, int):
            _expect(isinstance(cur, list) and tok < len(cur), path, f"index {tok} to exist")
            cur = cur[tok]
        else:
            _expect(isinstance(cur, dict), path, "an object along the path")
            cur = cur.setdefault(tok, {})
    last = tokens[-1]
    if isinstance(last, int):
        _expect(isinstance(cur, list) and last < len(cur), path, f"index {last} to exist")
    else:
        _expect(isinstance(cur, dict), path, "an object along the path")
    cur[last] = value
    return out


def coerce_value(text: str) -> Any:
    """Interpret a sweep value: JSON literal when possible, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text
