"""seeknet: packet-level simulation of an energy-aware cross-layer ad hoc network.

The stack per node is a calibrated link model, a CSMA/CA MAC with RTS/CTS,
segment bursts and block-ACK ARQ, and a greedy next-hop router that weighs
link reliability, differential backlog, geographic progress and residual
energy. ``run`` executes a validated scenario deterministically for a seed.
"""

from .engine import EventTrace, Simulator, run
from .metrics import MetricsReport, emit_report, relay_share_series, reliability, summarize
from .phy import LinkModel, link_reliability
from .routing import compute_utility, register_utility, select_next_hop
from .scenario import Scenario, load_scenario, parse_scenario, validate_scenario

__version__ = "0.1.0"

__all__ = [
    "EventTrace", "LinkModel", "MetricsReport", "Scenario", "Simulator",
    "compute_utility", "emit_report", "link_reliability", "load_scenario",
    "parse_scenario", "register_utility", "relay_share_series", "reliability",
    "run", "select_next_hop", "summarize", "validate_scenario",
]
