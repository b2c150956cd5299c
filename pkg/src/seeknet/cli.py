"""Command-line front door: ``seeknet run | sweep | validate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from typing import Optional

from .engine import run as run_scenario
from .metrics import SUMMARY_COLUMNS, emit_report
from .model import ScenarioError
from .scenario import (coerce_value, load_document, scenario_from_dict, set_path,
                       validate_scenario)

log = logging.getLogger("seeknet")

SEED_ENV = "SEEKNET_SEED"
SWEEP_COLUMNS = ["param", "value", "seed", *SUMMARY_COLUMNS]


class UsageError(Exception):
    pass


def bundled_scenarios() -> list[str]:
    root = resources.files("seeknet") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario_path(name: str) -> str:
    """A path on disk wins; otherwise fall back to the scenarios shipped with the package."""
    if os.path.exists(name):
        return name
    bundled = resources.files("seeknet") / "scenarios" / os.path.basename(name)
    if bundled.is_file():
        return str(bundled)
    return name


def _env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _apply_overrides(doc: dict, args) -> dict:
    if getattr(args, "arq", None) is not None:
        doc = set_path(doc, "mac.arq_enabled", args.arq == "on")
    return doc


def _load(args) -> dict:
    path = resolve_scenario_path(args.scenario)
    try:
        doc = load_document(path)
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e.strerror or e}") from None
    return _apply_overrides(doc, args)


def _seed_for(args, scenario_seed: int) -> int:
    # precedence: --seed, then the environment, then the scenario file
    if args.seed is not None:
        return args.seed
    env = _env_seed()
    return scenario_seed if env is None else env


def cmd_validate(args) -> int:
    sc = validate_scenario(scenario_from_dict(_load(args)))
    print(f"{sc.name}: ok ({len(sc.nodes)} nodes, {len(sc.sessions)} sessions, "
          f"{len(sc.world_events)} world events, {sc.sim.duration:g} s)")
    return 0


def cmd_run(args) -> int:
    sc = validate_scenario(scenario_from_dict(_load(args)))
    seed = _seed_for(args, sc.sim.seed)
    log.info("running %s with seed %d", sc.name, seed)
    report, _ = run_scenario(sc, seed)
    paths = emit_report(report, args.format, args.out)
    agg = report.aggregate
    rel = "n/a" if agg.reliability_pct is None else f"{agg.reliability_pct:.2f}%"
    print(f"{sc.name} seed={seed} sent={agg.sent} received={agg.received} "
          f"reliability={rel} goodput={agg.goodput_bps:.0f} b/s "
          f"normalized={agg.normalized_throughput:.4f} digest={report.trace_digest}")
    for p in paths:
        print(p)
    return 0


def _sweep_one(job):
    doc, param, value, seed = job
    sc = validate_scenario(scenario_from_dict(set_path(doc, param, value)))
    report, _ = run_scenario(sc, seed)
    row = report.aggregate.row()
    return {"param": param, "value": value, "seed": seed, **row}


def cmd_sweep(args) -> int:
    doc = _load(args)
    values = [coerce_value(v.strip()) for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values needs at least one value")
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    # surface path and schema problems before any run starts
    base = validate_scenario(scenario_from_dict(set_path(doc, args.param, values[0])))
    first = _seed_for(args, base.sim.seed)
    for v in values[1:]:
        validate_scenario(scenario_from_dict(set_path(doc, args.param, v)))
    jobs = [(doc, args.param, v, first + k) for v in values for k in range(args.seeds)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"sweep.{args.format}")
    if args.format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _cell(r[k]) for k in SWEEP_COLUMNS})
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"param": args.param, "rows": rows}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    for r in rows:
        rel = "n/a" if r["reliability_pct"] is None else f"{r['reliability_pct']:.2f}"
        print(f"{args.param}={r['value']} seed={r['seed']} reliability={rel} "
              f"normalized={r['normalized_throughput']:.4f}")
    print(path)
    return 0


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seeknet",
        description="Packet-level simulator for an energy-aware cross-layer ad hoc network.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="{run,sweep,validate}")
    sub.required = True

    def common(p, with_out=True):
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file (bundled names such as p2p.json also work)")
        p.add_argument("--arq", choices=("on", "off"), help="override mac.arq_enabled")
        if with_out:
            p.add_argument("--seed", type=int, help=f"RNG seed (overrides {SEED_ENV} and the file)")
            p.add_argument("--out", default="seeknet-out", help="output directory")
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    p_run = sub.add_parser("run", help="run one scenario and write the report files")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         help="dotted path into the scenario, e.g. sessions[0].payload_bytes")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", type=int, default=1, help="seeds per value (consecutive)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="check a scenario without running it")
    common(p_val, with_out=False)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"seeknet: error: {e}", file=sys.stderr)
        return 2
    except ScenarioError as e:
        print(f"seeknet: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        where = e.filename or "output"
        print(f"seeknet: cannot write {where}: {e.strerror or e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
