"""Deterministic discrete-time world for exercising the whole pipeline.

A World bundles simulated topologies, hop-to-zone assignments, recorded
carbon traces, and a file-transfer-node registry. Transfers execute tick
by tick against the injected clock, so policies can be compared on
measured (not just predicted) carbon intensity, and identical inputs
always reproduce identical reports.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional

from .carbon import TraceCarbonProvider, TraceStore, load_trace_store
from .clock import format_utc, parse_utc
from .discovery import ProbeConfig, SimulatedProber, TopologyHop, discover_path
from .errors import ParseError, SimulationTruncatedError
from .geo import GeoProvider
from .model import (
    CarbonSample,
    CarbonSeries,
    GeoLocation,
    IpAddress,
    NetworkPath,
    PathCarbonReport,
    TransferJob,
    TransferRecord,
)
from .pathcarbon import measure_path_carbon
from .scheduler import (
    ActiveTransfer,
    MigrationEvent,
    OverlayPlan,
    ReplicaChoice,
    TimeShiftDecision,
    carbon_score,
    migrate_if_exceeded,
    plan_overlay,
    schedule_space_shift,
    schedule_time_shift,
)

DEFAULT_TICK_S = 60.0


@dataclass(frozen=True)
class Ftn:
    """Registry entry for a file transfer node."""

    ftn_id: str
    address: str
    nic_speed: Optional[int] = None  # bits/s, informational in v1


class WorldGeoProvider(GeoProvider):
    """Answers from the world's hop-to-zone table.

    Simulated worlds do not model coordinates; zone is authoritative and
    latitude/longitude are placeholders.
    """

    def __init__(self, zones: dict[str, Optional[str]]):
        self._zones = zones

    def lookup(self, ip: IpAddress) -> Optional[GeoLocation]:
        zone = self._zones.get(ip.text)
        if zone is None:
            return None
        return GeoLocation(0.0, 0.0, zone)


@dataclass
class World:
    """Topologies, zone assignments, traces, FTNs, and the simulated clock."""

    topologies: dict[tuple[str, str], tuple[TopologyHop, ...]]
    zones: dict[str, Optional[str]]
    traces: TraceStore
    ftns: dict[str, Ftn]
    clock_start: datetime
    clock_step_s: float = DEFAULT_TICK_S

    def __post_init__(self):
        if self.clock_step_s <= 0:
            raise ValueError("clock_step_s must be positive")
        for (source, destination), hops in self.topologies.items():
            if not hops:
                raise ValueError(f"topology {source}->{destination} is empty")
            for addr in [source, destination] + [h.address.text for h in hops]:
                if addr not in self.zones and IpAddress(addr).is_public:
                    raise ValueError(
                        f"address {addr} in topology {source}->{destination} has no zone "
                        "assignment (use null for an explicit unknown)"
                    )
        self._geo = WorldGeoProvider(self.zones)
        self._carbon = TraceCarbonProvider(self.traces)

    # -- measurement -------------------------------------------------------

    def topology_for(self, source: str, destination: str) -> tuple[TopologyHop, ...]:
        key = (source, destination)
        if key not in self.topologies:
            raise ValueError(f"world has no topology {source}->{destination}")
        return self.topologies[key]

    def discover(self, source: str, destination: str, at: datetime) -> NetworkPath:
        topology = self.topology_for(source, destination)
        prober = SimulatedProber(IpAddress(source), topology)
        config = ProbeConfig(max_ttl=len(topology), probes_per_ttl=1)
        return discover_path(IpAddress(destination), config, prober, at=at)

    def measure(
        self, source: str, destination: str, at: datetime, path: Optional[NetworkPath] = None
    ) -> PathCarbonReport:
        if path is None:
            path = self.discover(source, destination, at)
        return measure_path_carbon(path, at, self._geo, self._carbon, zone_map=None)

    def path_zones(self, source: str, destination: str) -> list[str]:
        """Grid zones appearing along a path (endpoints included)."""
        topology = self.topology_for(source, destination)
        addresses = [source] + [h.address.text for h in topology] + [destination]
        found = {self.zones.get(a) for a in addresses} - {None}
        return sorted(found)  # type: ignore[arg-type]

    def path_series(self, source: str, destination: str) -> CarbonSeries:
        """Path-average carbon intensity as a step function.

        Breakpoints are the union of the sample times of every zone on the
        path, so the series is exact, and each value is produced by the same
        measurement pipeline the simulator samples during execution.
        """
        path = self.discover(source, destination, self.clock_start)
        times: set[datetime] = set()
        for zone in self.path_zones(source, destination):
            series = self.traces.get(zone)
            if series is not None:
                times.update(s.timestamp for s in series.samples)
        label = f"path:{source}->{destination}"
        samples = []
        for at in sorted(times):
            report = self.measure(source, destination, at, path=path)
            if report.average_intensity is not None:
                samples.append(
                    CarbonSample(zone=label, timestamp=at, intensity=report.average_intensity)
                )
        return CarbonSeries(zone=label, samples=tuple(samples))

    def coverage_check(self, zones: list[str], at: datetime) -> None:
        for zone in zones:
            series = self.traces.get(zone)
            if series is None or len(series) == 0:
                continue  # never covered; hop stays unknown throughout
            if at < series.start or at >= series.coverage_end:
                raise SimulationTruncatedError(
                    f"trace for zone {zone!r} does not cover {at.isoformat()}"
                )


# ---------------------------------------------------------------------------
# Transfer execution

@dataclass(frozen=True)
class TransferPlan:
    """Concrete execution choice: when to start, which FTN, which source."""

    start: datetime
    ftn_id: str
    source: str


@dataclass(frozen=True)
class SimStep:
    """One tick of a simulated transfer."""

    at: datetime
    bytes_moved: int
    ci: float
    ftn_id: str


@dataclass(frozen=True)
class SimTransferResult:
    record: TransferRecord
    steps: tuple[SimStep, ...]
    migrations: tuple[MigrationEvent, ...]


def run_transfer(
    world: World,
    job: TransferJob,
    plan: TransferPlan,
    threshold: Optional[float] = None,
) -> SimTransferResult:
    """Execute a transfer tick by tick against the world's traces.

    Each tick moves estimated_throughput x tick seconds bytes (the final
    tick carries the remainder) and samples the current FTN's path CI at
    the tick start. When a threshold is given, the migration policy is
    evaluated each tick before bytes move, so a migration re-homes the
    tick's bytes onto the new FTN's path. The record's average CI is the
    duration-weighted mean of the per-tick values.

    Raises SimulationTruncatedError when any path zone's trace stops
    covering a tick mid-transfer.
    """
    if job.bytes <= 0:
        raise ValueError("simulated transfers need at least one byte")
    if plan.ftn_id not in world.ftns:
        raise ValueError(f"unknown FTN {plan.ftn_id!r}")

    # FTNs reachable from this source participate as migration targets.
    paths: dict[str, tuple[str, str]] = {}
    zones_by_ftn: dict[str, list[str]] = {}
    for ftn in world.ftns.values():
        key = (plan.source, ftn.address)
        if key in world.topologies:
            paths[ftn.ftn_id] = key
            zones_by_ftn[ftn.ftn_id] = world.path_zones(*key)
    if plan.ftn_id not in paths:
        raise ValueError(f"world has no topology {plan.source}->{world.ftns[plan.ftn_id].address}")

    step_s = world.clock_step_s
    bytes_per_tick = max(1, int(job.estimated_throughput * step_s))
    current_ftn = plan.ftn_id
    moved = 0
    now = plan.start
    weighted_ci = 0.0
    total_duration = 0.0
    steps: list[SimStep] = []
    migrations: list[MigrationEvent] = []

    while moved < job.bytes:
        world.coverage_check(zones_by_ftn[current_ftn], now)
        if threshold is not None:
            ci_by_ftn = {
                ftn_id: world.measure(*key, at=now).average_intensity
                for ftn_id, key in paths.items()
            }
            event = migrate_if_exceeded(
                ActiveTransfer(
                    job_uuid=job.job_uuid,
                    current_ftn=current_ftn,
                    remaining_bytes=job.bytes - moved,
                    at=now,
                ),
                ci_by_ftn,
                threshold,
            )
            if event is not None:
                migrations.append(event)
                current_ftn = event.to_ftn
                world.coverage_check(zones_by_ftn[current_ftn], now)
            ci = ci_by_ftn[current_ftn]
        else:
            ci = world.measure(*paths[current_ftn], at=now).average_intensity
        if ci is None:
            raise SimulationTruncatedError(
                f"path {plan.source}->{world.ftns[current_ftn].address} has no known "
                f"carbon intensity at {now.isoformat()}"
            )
        chunk = min(bytes_per_tick, job.bytes - moved)
        duration = step_s if chunk == bytes_per_tick else chunk / job.estimated_throughput
        steps.append(SimStep(at=now, bytes_moved=chunk, ci=ci, ftn_id=current_ftn))
        weighted_ci += ci * duration
        total_duration += duration
        moved += chunk
        now = now + timedelta(seconds=duration)

    record = TransferRecord(
        job_uuid=job.job_uuid,
        bytes_moved=moved,
        started_at=plan.start,
        finished_at=now,
        average_ci=weighted_ci / total_duration,
        ftn_id=current_ftn,
    )
    return SimTransferResult(record=record, steps=tuple(steps), migrations=tuple(migrations))


# ---------------------------------------------------------------------------
# Scenarios

@dataclass(frozen=True)
class TimeShiftScenario:
    job: TransferJob
    source: str
    ftn_id: str
    step_s: float = 300.0


@dataclass(frozen=True)
class SpaceShiftScenario:
    job: TransferJob
    replicas: tuple[tuple[str, str], ...]  # (replica id, source address)
    ftn_id: str


@dataclass(frozen=True)
class OverlayScenario:
    job: TransferJob
    source: str
    ftn_ids: tuple[str, ...]
    threshold: Optional[float] = None


Scenario = TimeShiftScenario | SpaceShiftScenario | OverlayScenario


@dataclass(frozen=True)
class OptionResult:
    """Measured outcome of executing one candidate plan."""

    option_id: str
    predicted_ci: Optional[float]
    measured_ci: float
    score: Optional[float]
    started_at: datetime
    finished_at: datetime


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    options: tuple[OptionResult, ...]
    chosen_id: str
    baseline_id: str
    savings_ratio: float  # measured baseline CI / measured chosen CI
    predicted_savings_ratio: float
    migrations: tuple[MigrationEvent, ...]
    decision: TimeShiftDecision | ReplicaChoice | OverlayPlan
    runs: dict[str, SimTransferResult] = field(repr=False, default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "chosen": self.chosen_id,
            "baseline": self.baseline_id,
            "savings_ratio": self.savings_ratio,
            "predicted_savings_ratio": self.predicted_savings_ratio,
            "options": [
                {
                    "id": o.option_id,
                    "predicted_ci": o.predicted_ci,
                    "measured_ci": o.measured_ci,
                    "carbon_score": o.score,
                    "started_at": format_utc(o.started_at),
                    "finished_at": format_utc(o.finished_at),
                }
                for o in self.options
            ],
            "migrations": [
                {
                    "at": format_utc(m.at),
                    "from_ftn": m.from_ftn,
                    "to_ftn": m.to_ftn,
                    "remaining_bytes": m.remaining_bytes,
                }
                for m in self.migrations
            ],
        }

    def step_rows(self) -> list[dict]:
        """Per-tick time series of every executed option, for CSV export."""
        rows = []
        for option_id, result in sorted(self.runs.items()):
            for step in result.steps:
                rows.append(
                    {
                        "option": option_id,
                        "timestamp": format_utc(step.at),
                        "bytes": step.bytes_moved,
                        "ci": step.ci,
                        "ftn": step.ftn_id,
                    }
                )
        return rows


def _score_or_none(record: TransferRecord) -> Optional[float]:
    try:
        return carbon_score(record).value
    except Exception:
        return None


def _option(option_id: str, predicted: Optional[float], result: SimTransferResult) -> OptionResult:
    return OptionResult(
        option_id=option_id,
        predicted_ci=predicted,
        measured_ci=result.record.average_ci,
        score=_score_or_none(result.record),
        started_at=result.record.started_at,
        finished_at=result.record.finished_at,
    )


def run_experiment(world: World, scenario: Scenario) -> ExperimentReport:
    """Schedule with the matching policy, then execute baseline and chosen plans.

    The savings ratio reported is measured from execution, not just
    predicted: baseline is the naive plan (earliest start for time shifting,
    the worst viable candidate otherwise).
    """
    if isinstance(scenario, TimeShiftScenario):
        return _run_time_shift(world, scenario)
    if isinstance(scenario, SpaceShiftScenario):
        return _run_space_shift(world, scenario)
    if isinstance(scenario, OverlayScenario):
        return _run_overlay(world, scenario)
    raise TypeError(f"unknown scenario type {type(scenario).__name__}")


def _ratio(baseline: float, chosen: float) -> float:
    if chosen == 0:
        return float("inf") if baseline > 0 else 1.0
    return baseline / chosen


def _run_time_shift(world: World, scenario: TimeShiftScenario) -> ExperimentReport:
    job = scenario.job
    ftn = world.ftns[scenario.ftn_id]
    series = world.path_series(scenario.source, ftn.address)
    decision = schedule_time_shift(job, series, step_s=scenario.step_s)
    baseline_run = run_transfer(
        world, job, TransferPlan(start=job.earliest_start, ftn_id=scenario.ftn_id, source=scenario.source)
    )
    if decision.chosen_start == job.earliest_start:
        chosen_run = baseline_run
    else:
        chosen_run = run_transfer(
            world, job, TransferPlan(start=decision.chosen_start, ftn_id=scenario.ftn_id, source=scenario.source)
        )
    options = (
        _option("earliest-start", decision.baseline_avg_ci, baseline_run),
        _option("time-shifted", decision.predicted_avg_ci, chosen_run),
    )
    return ExperimentReport(
        kind="time-shift",
        options=options,
        chosen_id="time-shifted",
        baseline_id="earliest-start",
        savings_ratio=_ratio(baseline_run.record.average_ci, chosen_run.record.average_ci),
        predicted_savings_ratio=decision.savings_ratio,
        migrations=(),
        decision=decision,
        runs={"earliest-start": baseline_run, "time-shifted": chosen_run},
    )


def _run_space_shift(world: World, scenario: SpaceShiftScenario) -> ExperimentReport:
    job = scenario.job
    ftn = world.ftns[scenario.ftn_id]
    reports = [
        (replica_id, world.measure(source, ftn.address, job.earliest_start))
        for replica_id, source in scenario.replicas
    ]
    choice = schedule_space_shift(job, reports)
    sources = dict(scenario.replicas)
    viable = [(avg, rid) for rid, avg in choice.per_replica if avg is not None]
    baseline_id = max(viable)[1]
    runs: dict[str, SimTransferResult] = {}
    for replica_id in {choice.chosen_source, baseline_id}:
        runs[replica_id] = run_transfer(
            world,
            job,
            TransferPlan(start=job.earliest_start, ftn_id=scenario.ftn_id, source=sources[replica_id]),
        )
    predicted = dict(choice.per_replica)
    options = tuple(
        _option(replica_id, predicted.get(replica_id), result)
        for replica_id, result in sorted(runs.items())
    )
    return ExperimentReport(
        kind="space-shift",
        options=options,
        chosen_id=choice.chosen_source,
        baseline_id=baseline_id,
        savings_ratio=_ratio(
            runs[baseline_id].record.average_ci, runs[choice.chosen_source].record.average_ci
        ),
        predicted_savings_ratio=choice.savings_ratio,
        migrations=(),
        decision=choice,
        runs=runs,
    )


def _run_overlay(world: World, scenario: OverlayScenario) -> ExperimentReport:
    job = scenario.job
    reports = [
        (ftn_id, world.measure(scenario.source, world.ftns[ftn_id].address, job.earliest_start))
        for ftn_id in scenario.ftn_ids
    ]
    plan = plan_overlay(job, reports, migration_threshold=scenario.threshold)
    viable = [(c.average_ci, c.ftn_id) for c in plan.per_ftn if c.average_ci is not None]
    baseline_id = max(viable)[1]
    chosen_run = run_transfer(
        world,
        job,
        TransferPlan(start=job.earliest_start, ftn_id=plan.chosen_ftn, source=scenario.source),
        threshold=scenario.threshold,
    )
    runs = {plan.chosen_ftn: chosen_run}
    if baseline_id != plan.chosen_ftn:
        runs[baseline_id] = run_transfer(
            world,
            job,
            TransferPlan(start=job.earliest_start, ftn_id=baseline_id, source=scenario.source),
        )
    predicted = {c.ftn_id: c.average_ci for c in plan.per_ftn}
    options = tuple(
        _option(ftn_id, predicted.get(ftn_id), result) for ftn_id, result in sorted(runs.items())
    )
    return ExperimentReport(
        kind="overlay",
        options=options,
        chosen_id=plan.chosen_ftn,
        baseline_id=baseline_id,
        savings_ratio=_ratio(
            runs[baseline_id].record.average_ci, chosen_run.record.average_ci
        ),
        predicted_savings_ratio=_ratio(max(viable)[0], min(viable)[0]),
        migrations=chosen_run.migrations,
        decision=plan,
        runs=runs,
    )


# ---------------------------------------------------------------------------
# File formats

def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ParseError(f"missing {key!r} in {context}")
    return mapping[key]


def load_world(path: str) -> World:
    """Load a world description file (JSON).

    Sections: clock {start, step_seconds}, zones {address: zone|null},
    topologies [{source, destination, hops: [{address, rtt_ms, drop?}]}],
    traces [csv paths, relative to the world file], ftns [{id, address,
    nic_speed?}].
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read world file: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=path) from exc

    base = os.path.dirname(os.path.abspath(path))
    try:
        clock = _require(doc, "clock", "world")
        topologies: dict[tuple[str, str], tuple[TopologyHop, ...]] = {}
        for entry in _require(doc, "topologies", "world"):
            hops = tuple(
                TopologyHop(
                    address=IpAddress(_require(h, "address", "topology hop")),
                    rtt_ms=float(h.get("rtt_ms", 1.0)),
                    drop=bool(h.get("drop", False)),
                )
                for h in _require(entry, "hops", "topology")
            )
            key = (_require(entry, "source", "topology"), _require(entry, "destination", "topology"))
            topologies[key] = hops
        trace_paths = [
            p if os.path.isabs(p) else os.path.join(base, p) for p in doc.get("traces", [])
        ]
        ftns = {}
        for entry in doc.get("ftns", []):
            ftn = Ftn(
                ftn_id=_require(entry, "id", "ftn"),
                address=_require(entry, "address", "ftn"),
                nic_speed=entry.get("nic_speed"),
            )
            ftns[ftn.ftn_id] = ftn
        world = World(
            topologies=topologies,
            zones=dict(doc.get("zones", {})),
            traces=load_trace_store(trace_paths),
            ftns=ftns,
            clock_start=parse_utc(_require(clock, "start", "clock")),
            clock_step_s=float(clock.get("step_seconds", DEFAULT_TICK_S)),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid world description: {exc}", path=path) from exc
    return world


def job_from_json(doc: dict, default_uuid: str = "job-1") -> TransferJob:
    return TransferJob(
        job_uuid=doc.get("job_uuid", default_uuid),
        bytes=int(_require(doc, "bytes", "job")),
        source=_require(doc, "source", "job"),
        destination=_require(doc, "destination", "job"),
        earliest_start=parse_utc(_require(doc, "earliest_start", "job")),
        deadline=parse_utc(_require(doc, "deadline", "job")),
        estimated_throughput=float(_require(doc, "estimated_throughput", "job")),
    )


def load_scenario(path: str) -> Scenario:
    """Load a scenario file (JSON) with kind time-shift, space-shift, or overlay."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read scenario file: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=path) from exc
    try:
        kind = _require(doc, "kind", "scenario")
        job = job_from_json(_require(doc, "job", "scenario"))
        if kind == "time-shift":
            return TimeShiftScenario(
                job=job,
                source=_require(doc, "source", "scenario"),
                ftn_id=_require(doc, "ftn", "scenario"),
                step_s=float(doc.get("step_seconds", 300.0)),
            )
        if kind == "space-shift":
            replicas = tuple(
                (entry.get("id", entry["source"]), entry["source"])
                for entry in _require(doc, "replicas", "scenario")
            )
            return SpaceShiftScenario(job=job, replicas=replicas, ftn_id=_require(doc, "ftn", "scenario"))
        if kind == "overlay":
            return OverlayScenario(
                job=job,
                source=_require(doc, "source", "scenario"),
                ftn_ids=tuple(_require(doc, "ftns", "scenario")),
                threshold=doc.get("threshold"),
            )
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"invalid scenario: {exc}", path=path) from exc
    raise ParseError(f"unknown scenario kind {kind!r}", path=path)
