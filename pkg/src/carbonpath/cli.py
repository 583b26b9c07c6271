"""Command-line entry point.

Data goes to stdout as JSON or CSV (never mixed with prose); diagnostics go
to stderr. Exit codes: 0 success, 1 usage error, 2 provider error, 3 data
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime
from typing import Optional

from .carbon import CarbonSample, load_trace_csv
from .clock import SystemClock, format_utc, parse_utc
from .config import CONFIG_ENV, load_config
from .discovery import discover_path
from .errors import (
    CarbonPathError,
    MonitorError,
    ParseError,
    ProbeError,
    ProviderError,
    SinkError,
)
from .metrics import (
    PsutilSource,
    SyntheticSource,
    emit,
    sample,
    snapshot_from_json,
)
from .model import (
    CarbonSeries,
    Hop,
    HopReading,
    IpAddress,
    NetworkPath,
    PathCarbonReport,
)
from .pathcarbon import (
    MonitorConfig,
    measure_path_carbon,
    monitor_path,
    path_to_json,
    report_to_json,
)
from .scheduler import (
    OverlayPlan,
    ReplicaChoice,
    TimeShiftDecision,
    plan_overlay,
    schedule_space_shift,
    schedule_time_shift,
)
from .simulator import job_from_json, load_scenario, load_world, run_experiment
from .store import DECISIONS, REPORTS, TRANSFERS, RecordStore


def _err(message: str) -> None:
    print(f"carbonpath: {message}", file=sys.stderr)


class _StoreSink:
    """Adapts the record store to the monitor's sink interface."""

    def __init__(self, store: RecordStore, kind: str):
        self._store = store
        self._kind = kind

    def append(self, record: dict) -> None:
        try:
            self._store.append(self._kind, record)
        except SinkError as exc:
            raise MonitorError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Subcommand handlers

def _cmd_trace(args) -> int:
    config = load_config(args.config)
    destination = IpAddress(args.destination)
    prober = config.build_prober(args.destination)
    path = discover_path(destination, config.probe, prober)
    print(json.dumps(path_to_json(path), indent=2))
    return 0


def _cmd_carbon_path(args) -> int:
    config = load_config(args.config)
    clock = SystemClock()
    destination = IpAddress(args.destination)
    prober = config.build_prober(args.destination)
    at = args.at if args.at is not None else clock.now()
    path = discover_path(destination, config.probe, prober, at=at)
    report = measure_path_carbon(
        path, at, config.build_geo(clock), config.build_carbon(clock), config.build_zone_map()
    )
    print(json.dumps(report_to_json(report), indent=2))
    return 0


def _cmd_monitor(args) -> int:
    config = load_config(args.config)
    clock = SystemClock()
    destination = IpAddress(args.destination)
    prober = config.build_prober(args.destination)
    monitor_config = MonitorConfig(
        interval_s=args.interval if args.interval is not None else config.monitor_interval_s,
        duration_s=args.duration if args.duration is not None else config.monitor_duration_s,
    )
    store = RecordStore(args.store or config.store_dir)
    sink = _StoreSink(store, REPORTS)
    try:
        for report in monitor_path(
            destination,
            prober,
            config.probe,
            monitor_config,
            config.build_geo(clock),
            config.build_carbon(clock),
            config.build_zone_map(),
            clock=clock,
            sink=sink,
        ):
            print(json.dumps(report_to_json(report), separators=(",", ":")), flush=True)
    except KeyboardInterrupt:
        pass
    return 0


def _summary_report(at: datetime, average_ci: Optional[float], hop_count: int) -> PathCarbonReport:
    """Stub report for candidates given as (id, average_ci, hop_count) rows."""
    placeholder = IpAddress("0.0.0.0")
    hops = tuple(Hop(ttl=i + 1, address=None, rtt_ms=None) for i in range(hop_count))
    path = NetworkPath(
        source_host=placeholder,
        destination_host=placeholder,
        hops=hops,
        discovered_at=at,
        reached=False,
    )
    readings = tuple(
        HopReading(ttl=None, address=None, location=None, intensity=average_ci)
        for _ in range(hop_count + 2)
    )
    return PathCarbonReport.from_readings(path=path, at=at, readings=readings)


def _series_from_request(doc: dict, base: str) -> CarbonSeries:
    section = doc.get("series")
    if not isinstance(section, dict):
        raise ParseError("schedule request needs a 'series' object for the time policy")
    zone = section.get("zone")
    if not zone:
        raise ParseError("series needs a zone")
    if "trace_csv" in section:
        path = section["trace_csv"]
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        by_zone = load_trace_csv(path)
        if zone not in by_zone:
            raise ParseError(f"trace file has no samples for zone {zone!r}", path=path)
        samples = sorted(by_zone[zone], key=lambda s: s.timestamp)
        return CarbonSeries(zone=zone, samples=tuple(samples))
    samples = tuple(
        CarbonSample(zone=zone, timestamp=parse_utc(entry["timestamp"]), intensity=float(entry["intensity"]))
        for entry in section.get("samples", [])
    )
    return CarbonSeries(zone=zone, samples=samples)


def _decision_to_json(decision) -> dict:
    if isinstance(decision, TimeShiftDecision):
        return {
            "kind": "time-shift",
            "chosen_start": format_utc(decision.chosen_start),
            "predicted_avg_ci": decision.predicted_avg_ci,
            "baseline_avg_ci": decision.baseline_avg_ci,
            "savings_ratio": decision.savings_ratio,
        }
    if isinstance(decision, ReplicaChoice):
        return {
            "kind": "space-shift",
            "chosen": decision.chosen_source,
            "candidates": [
                {"id": rid, "average_ci": avg} for rid, avg in decision.per_replica
            ],
            "savings_ratio": decision.savings_ratio,
        }
    if isinstance(decision, OverlayPlan):
        return {
            "kind": "overlay",
            "chosen": decision.chosen_ftn,
            "candidates": [
                {"id": c.ftn_id, "average_ci": c.average_ci, "hop_count": c.hop_count}
                for c in decision.per_ftn
            ],
            "migration_threshold": decision.migration_threshold,
        }
    raise TypeError(f"cannot serialize decision {type(decision).__name__}")


def _cmd_schedule(args) -> int:
    try:
        with open(args.request, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read schedule request: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"schedule request is not valid JSON: {exc}") from exc
    base = os.path.dirname(os.path.abspath(args.request))
    job = job_from_json(doc.get("job", {}))

    if args.policy == "time":
        series = _series_from_request(doc, base)
        decision = schedule_time_shift(job, series, step_s=float(doc.get("step_seconds", 300.0)))
    elif args.policy == "space":
        replicas = [
            (entry["id"], _summary_report(job.earliest_start, entry.get("average_ci"), int(entry.get("hop_count", 0))))
            for entry in doc.get("replicas", [])
        ]
        decision = schedule_space_shift(job, replicas)
    else:
        ftns = [
            (entry["id"], _summary_report(job.earliest_start, entry.get("average_ci"), int(entry.get("hop_count", 0))))
            for entry in doc.get("ftns", [])
        ]
        decision = plan_overlay(job, ftns, migration_threshold=doc.get("threshold"))

    payload = {"job_uuid": job.job_uuid, "timestamp": format_utc(job.earliest_start)}
    payload.update(_decision_to_json(decision))
    if args.store:
        RecordStore(args.store).append(DECISIONS, payload)
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_simulate(args) -> int:
    world = load_world(args.world)
    scenario = load_scenario(args.scenario)
    report = run_experiment(world, scenario)
    if args.csv_out:
        with open(args.csv_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["option", "timestamp", "bytes", "ci", "ftn"])
            for row in report.step_rows():
                writer.writerow([row["option"], row["timestamp"], row["bytes"], row["ci"], row["ftn"]])
    if args.store:
        store = RecordStore(args.store)
        payload = {"timestamp": format_utc(scenario.job.earliest_start), "job_uuid": scenario.job.job_uuid}
        payload.update(_decision_to_json(report.decision))
        store.append(DECISIONS, payload)
        for option_id, result in sorted(report.runs.items()):
            record = result.record
            store.append(
                TRANSFERS,
                {
                    "timestamp": format_utc(record.started_at),
                    "job_uuid": record.job_uuid,
                    "option": option_id,
                    "bytes_moved": record.bytes_moved,
                    "started_at": format_utc(record.started_at),
                    "finished_at": format_utc(record.finished_at),
                    "average_ci": record.average_ci,
                    "ftn_id": record.ftn_id,
                },
            )
    print(json.dumps(report.to_json(), indent=2))
    return 0


def _cmd_metrics(args) -> int:
    config = load_config(args.config)
    if config.metrics_source == "synthetic":
        with open(config.metrics_script, encoding="utf-8") as fh:
            records = json.load(fh)
        snapshots = [snapshot_from_json(r) for r in records]
        source = SyntheticSource([(s.host, s.net, s.transfer) for s in snapshots])
    else:
        source = PsutilSource()
    clock = SystemClock()
    count = 1 if args.once else args.count
    emitted = 0
    try:
        while count is None or emitted < count:
            snapshot = sample(source, clock)
            emit(snapshot, sys.stdout)
            emitted += 1
            if count is None or emitted < count:
                clock.sleep(args.interval)
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_report(args) -> int:
    store = RecordStore(args.store)
    records = list(store.scan(REPORTS, since=args.since, until=args.until))
    if args.format == "json":
        for record in records:
            print(json.dumps(record, separators=(",", ":")))
        return 0
    writer = csv.writer(sys.stdout)
    if args.table == "per-tick":
        writer.writerow(["timestamp", "average_intensity", "known_hops", "unknown_hops"])
        for record in records:
            writer.writerow(
                [
                    record.get("timestamp"),
                    record.get("average_intensity"),
                    record.get("known_hops"),
                    record.get("unknown_hops"),
                ]
            )
        return 0
    # per-hop rows, grouped by zone so per-hop distributions plot directly
    rows = []
    for record in records:
        for hop in record.get("hops", []):
            rows.append(
                (
                    hop.get("zone") or "",
                    hop.get("ip") or "",
                    record.get("timestamp") or "",
                    hop.get("ttl"),
                    hop.get("intensity"),
                )
            )
    rows.sort(key=lambda r: (r[0], r[1], r[2], -1 if r[3] is None else r[3]))
    writer.writerow(["zone", "ip", "timestamp", "ttl", "intensity"])
    for zone, ip, ts, ttl, intensity in rows:
        writer.writerow([zone, ip, ts, ttl, intensity])
    return 0


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carbonpath",
        description="Measure the grid carbon intensity of network paths and "
        "schedule transfers for carbon savings.",
        epilog=f"The config file is given by --config or ${CONFIG_ENV}.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="path to the JSON config file")

    p = sub.add_parser("trace", help="discover the hop-by-hop path to a destination")
    add_config(p)
    p.add_argument("destination")
    p.set_defaults(handler=_cmd_trace)

    p = sub.add_parser("carbon-path", help="measure per-hop and path carbon intensity")
    add_config(p)
    p.add_argument("destination")
    p.add_argument("--at", type=parse_utc, help="measure at this UTC instant (default: now)")
    p.set_defaults(handler=_cmd_carbon_path)

    p = sub.add_parser("monitor", help="measure the path periodically, appending to the store")
    add_config(p)
    p.add_argument("destination")
    p.add_argument("--interval", type=float, help="seconds between measurements")
    p.add_argument("--duration", type=float, help="total seconds to run (default: unbounded)")
    p.add_argument("--store", help="store directory (default: from config)")
    p.set_defaults(handler=_cmd_monitor)

    p = sub.add_parser("schedule", help="run a scheduling policy over a request file")
    p.add_argument("request", help="JSON file with the job and policy inputs")
    p.add_argument("--policy", choices=("time", "space", "overlay"), required=True)
    p.add_argument("--store", help="append the decision to this store directory")
    p.set_defaults(handler=_cmd_schedule)

    p = sub.add_parser("simulate", help="run a world/scenario experiment")
    p.add_argument("world")
    p.add_argument("scenario")
    p.add_argument("--csv-out", help="write the per-tick time series to this CSV file")
    p.add_argument("--store", help="append decision and transfer records to this store")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("metrics", help="emit end-system metric snapshots as JSON lines")
    add_config(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--once", action="store_true", help="emit a single snapshot (default)")
    group.add_argument("--watch", action="store_true", help="keep emitting every --interval")
    p.add_argument("--interval", type=float, default=10.0)
    p.add_argument("--count", type=int, help="stop --watch after this many snapshots")
    p.set_defaults(handler=_cmd_metrics)

    p = sub.add_parser("report", help="export stored path reports as plot-ready tables")
    p.add_argument("store", help="store directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--table", choices=("per-tick", "per-hop"), default="per-tick")
    p.add_argument("--since", type=parse_utc)
    p.add_argument("--until", type=parse_utc)
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "command", None) == "metrics" and not args.watch:
        args.once = True
    try:
        return args.handler(args)
    except (ProbeError, ProviderError) as exc:
        _err(str(exc))
        return 2
    except (CarbonPathError, OSError, ValueError) as exc:
        _err(str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
