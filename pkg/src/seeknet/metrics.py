"""Run metrics: reliability, goodput, normalized throughput and per-relay series."""

from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Optional

from .engine import EventTrace
from .model import Role
from .scenario import Scenario

DROP_REASONS = ("queue_full", "no_arq", "retry_exhausted")

SUMMARY_COLUMNS = [
    "session", "src", "dst", "sent", "received", "dropped",
    *(f"dropped_{r}" for r in DROP_REASONS),
    "reliability_pct", "goodput_bps", "normalized_throughput",
]
SERIES_COLUMNS = ["time_s", "relay", "raw_packets", "smoothed_packets", "raw_pps", "smoothed_pps"]


@dataclass
class SessionMetrics:
    session: str
    src: Optional[int]
    dst: Optional[int]
    sent: int = 0
    received: int = 0
    dropped: dict[str, int] = field(default_factory=dict)
    reliability_pct: Optional[float] = None
    goodput_bps: float = 0.0
    normalized_throughput: float = 0.0

    def row(self) -> dict:
        r = {"session": self.session, "src": self.src, "dst": self.dst,
             "sent": self.sent, "received": self.received,
             "dropped": sum(self.dropped.values())}
        for reason in DROP_REASONS:
            r[f"dropped_{reason}"] = self.dropped.get(reason, 0)
        r["reliability_pct"] = self.reliability_pct
        r["goodput_bps"] = self.goodput_bps
        r["normalized_throughput"] = self.normalized_throughput
        return r


@dataclass
class MetricsReport:
    scenario: str
    sessions: list[SessionMetrics]
    aggregate: SessionMetrics
    forwarded: dict[int, int]
    relay_series: list[dict]
    airtime_utilization: float
    trace_digest: str
    data_rate_mbps: float
    measured_interval_s: float
    conservation: dict[str, int] = field(default_factory=dict)
    seed: Optional[int] = None

    def summary_rows(self) -> list[dict]:
        return [s.row() for s in self.sessions] + [self.aggregate.row()]


def reliability(sent: int, received: int) -> Optional[float]:
    """Percentage received; ``None`` when nothing was sent."""
    if sent == 0:
        return None
    return 100.0 * received / sent


def summarize(trace: EventTrace, scenario: Scenario) -> MetricsReport:
    """Fold a finished trace into per-session and aggregate metrics.

    Goodput counts unique payload bytes delivered to the final destination
    after warmup; headers, control frames, beacons and retransmissions never
    enter it. Reliability counts packets generated after warmup.
    """
    warm = scenario.sim.warmup
    dur = scenario.sim.duration
    interval = dur - warm
    rate_bps = scenario.radio.data_rate * 1e6
    n = len(scenario.sessions)
    sent = [0] * n
    received = [0] * n
    dropped = [Counter() for _ in range(n)]
    goodbytes = [0] * n
    forwarded: Counter = Counter()
    airtime = 0.0

    for t, node, kind, d in trace.records:
        if kind == "gen":
            if t >= warm:
                sent[d[0]] += 1
        elif kind == "deliver":
            idx, created = d[1], float(d[4])
            if created >= warm:
                received[idx] += 1
            if t >= warm:
                goodbytes[idx] += d[3]
        elif kind == "drop":
            idx, created = d[0], float(d[3])
            if idx >= 0 and created >= warm:
                dropped[idx][d[2]] += 1
        elif kind == "fwd":
            forwarded[d[0]] += 1
        elif kind == "end":
            airtime = float(d[1])

    sessions = []
    for i, s in enumerate(scenario.sessions):
        gp = 8.0 * goodbytes[i] / interval
        sessions.append(SessionMetrics(
            str(i), s.src, s.dst, sent[i], received[i], dict(sorted(dropped[i].items())),
            reliability(sent[i], received[i]), gp, gp / rate_bps))
    tot_drop: Counter = Counter()
    for c in dropped:
        tot_drop.update(c)
    gp = 8.0 * sum(goodbytes) / interval
    agg = SessionMetrics("all", None, None, sum(sent), sum(received),
                         dict(sorted(tot_drop.items())),
                         reliability(sum(sent), sum(received)), gp, gp / rate_bps)

    series = relay_share_series(trace, scenario, scenario.sim.bin, scenario.sim.window)
    return MetricsReport(scenario.name, sessions, agg, dict(sorted(forwarded.items())), series,
                         airtime / dur, trace.digest(), scenario.radio.data_rate, interval)


def moving_average(values: list[float], k: int) -> list[float]:
    """Trailing mean over the last ``k`` values (fewer at the start)."""
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= k:
            acc -= values[i - k]
        out.append(acc / min(i + 1, k))
    return out


def relay_share_series(trace: EventTrace, scenario: Scenario, bin_s: float = 10.0,
                       window_s: float = 60.0) -> list[dict]:
    """Per-relay packets delivered to a gateway per bin, raw and window-smoothed.

    Rows with ``relay == "gateway"`` carry the aggregate arrivals at all
    gateway nodes. Times are bin end times in seconds.
    """
    relays = sorted(n.id for n in scenario.nodes if n.role is Role.RELAY)
    gateways = {n.id for n in scenario.nodes if n.role is Role.GATEWAY}
    nbins = max(1, math.ceil(scenario.sim.duration / bin_s - 1e-9))
    counts = defaultdict(lambda: [0] * nbins)
    total = [0] * nbins
    for t, node, kind, d in trace.records:
        if kind != "deliver" or node not in gateways:
            continue
        b = min(int(t // bin_s), nbins - 1)
        total[b] += 1
        if d[0] in relays:
            counts[d[0]][b] += 1
    k = max(1, round(window_s / bin_s))
    rows = []
    for key, raw in [*((r, counts[r]) for r in relays), ("gateway", total)]:
        smooth = moving_average(raw, k)
        for b in range(nbins):
            rows.append({"time_s": (b + 1) * bin_s, "relay": key,
                         "raw_packets": raw[b], "smoothed_packets": smooth[b],
                         "raw_pps": raw[b] / bin_s, "smoothed_pps": smooth[b] / bin_s})
    return rows


def series_by_relay(rows: list[dict], column: str = "smoothed_packets") -> dict:
    out: dict = defaultdict(list)
    for r in rows:
        out[r["relay"]].append((r["time_s"], r[column]))
    return dict(out)


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def emit_report(report: MetricsReport, fmt: str, out_dir: str) -> list[str]:
    """Write summary.<fmt>, relay_series.csv, relay_series_wide.csv and trace_digest.txt.

    Returns the written paths.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    summary = os.path.join(out_dir, f"summary.{fmt}")
    rows = report.summary_rows()
    if fmt == "csv":
        with open(summary, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _csv_value(r[k]) for k in SUMMARY_COLUMNS})
    else:
        doc = {
            "scenario": report.scenario,
            "seed": report.seed,
            "data_rate_mbps": report.data_rate_mbps,
            "measured_interval_s": report.measured_interval_s,
            "airtime_utilization": report.airtime_utilization,
            "trace_digest": report.trace_digest,
            "summary": rows,
            "forwarded": {str(k): v for k, v in report.forwarded.items()},
            "conservation": report.conservation,
        }
        with open(summary, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    paths.append(summary)

    series = os.path.join(out_dir, "relay_series.csv")
    with open(series, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SERIES_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in report.relay_series:
            w.writerow({k: _csv_value(r[k]) for k in SERIES_COLUMNS})
    paths.append(series)

    # one smoothed packets/s column per relay, ready to plot against time
    wide = os.path.join(out_dir, "relay_series_wide.csv")
    by_relay = series_by_relay(report.relay_series, "smoothed_pps")
    keys = list(by_relay)
    with open(wide, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", *(f"relay_{k}" if k != "gateway" else "gateway" for k in keys)])
        if keys:
            for i, (t, _) in enumerate(by_relay[keys[0]]):
                w.writerow([repr(t), *(repr(by_relay[k][i][1]) for k in keys)])
    paths.append(wide)

    digest = os.path.join(out_dir, "trace_digest.txt")
    with open(digest, "w", encoding="utf-8") as fh:
        fh.write(report.trace_digest + "\n")
    paths.append(digest)
    return paths


def read_summary(path: str) -> list[dict]:
    """Load summary rows back from CSV or JSON, normalizing types for comparison."""
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)["summary"]
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                if k == "session":
                    row[k] = v
                elif v == "":
                    row[k] = None
                elif k in ("reliability_pct", "goodput_bps", "normalized_throughput"):
                    row[k] = float(v)
                else:
                    row[k] = int(v)
            out.append(row)
    return out


def report_dict(report: MetricsReport) -> dict:
    return asdict(report)
