"""Carbon-saving scheduling policies and transfer scoring.

Three levers reduce the carbon cost of moving bytes: shifting the start
time inside the deadline window, choosing the replica whose path is
greenest, and picking (or mid-transfer migrating between) file transfer
nodes. Every policy here is a pure function of its inputs; execution lives
in the simulator and in external transfer tooling.

Replica and FTN candidates are ranked by one nonnegative metric. Callers
are responsible for feeding values on a single comparable scale, either
gCO2eq/kWh path averages or a relative regional index, never a mix: the
reported savings_ratio is the ratio of those inputs, nothing more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Mapping, Optional, Sequence

from .errors import (
    NoCoverageError,
    NoViableFtnError,
    NoViableReplicaError,
    UndefinedScoreError,
)
from .model import (
    CarbonScore,
    CarbonSeries,
    PathCarbonReport,
    TransferJob,
    TransferRecord,
    time_weighted_average,
)

DEFAULT_STEP_S = 300.0


def _savings_ratio(worst: float, chosen: float) -> float:
    if chosen == 0:
        return math.inf if worst > 0 else 1.0
    return worst / chosen


# ---------------------------------------------------------------------------
# Time shifting

@dataclass(frozen=True)
class TimeShiftDecision:
    """Outcome of a start-time search inside the job's window.

    baseline_avg_ci is the predicted average for starting immediately at
    earliest_start; savings_ratio = baseline/chosen.
    """

    chosen_start: datetime
    predicted_avg_ci: float
    baseline_avg_ci: float
    savings_ratio: float


def schedule_time_shift(
    job: TransferJob,
    path_series: CarbonSeries,
    step_s: float = DEFAULT_STEP_S,
) -> TimeShiftDecision:
    """Pick the start minimizing the predicted average CI over the transfer.

    Candidate starts are earliest_start, earliest_start+step, ... while the
    estimated duration still fits before the deadline; ties keep the
    earliest candidate. The series is used as a persistence forecast: the
    recorded past stands in for the future window.

    Raises NoCoverageError when the series does not cover the whole
    [earliest_start, deadline] window.
    """
    if step_s <= 0:
        raise ValueError("step_s must be positive")
    duration = job.estimated_duration
    if (
        len(path_series) == 0
        or job.earliest_start < path_series.start
        or job.deadline > path_series.coverage_end
    ):
        raise NoCoverageError(
            f"series for zone {path_series.zone!r} does not cover the job window"
        )

    best_start: Optional[datetime] = None
    best_avg = math.inf
    baseline_avg: Optional[float] = None
    k = 0
    while True:
        start = job.earliest_start + timedelta(seconds=k * step_s)
        if start + timedelta(seconds=duration) > job.deadline:
            break
        avg = time_weighted_average(path_series, start, start + timedelta(seconds=duration))
        if baseline_avg is None:
            baseline_avg = avg
        if avg < best_avg:
            best_avg = avg
            best_start = start
        k += 1
    assert best_start is not None and baseline_avg is not None  # k=0 feasible by job invariant
    return TimeShiftDecision(
        chosen_start=best_start,
        predicted_avg_ci=best_avg,
        baseline_avg_ci=baseline_avg,
        savings_ratio=_savings_ratio(baseline_avg, best_avg),
    )


# ---------------------------------------------------------------------------
# Space shifting (replica selection)

@dataclass(frozen=True)
class ReplicaChoice:
    """Chosen file source among replicas, with the candidate table kept."""

    chosen_source: str
    per_replica: tuple[tuple[str, Optional[float]], ...]
    savings_ratio: float


def schedule_space_shift(
    job: TransferJob, replicas: Sequence[tuple[str, PathCarbonReport]]
) -> ReplicaChoice:
    """Pick the replica whose path report has the lowest average CI.

    Replicas whose reports are entirely unknown are excluded; ties go to the
    lexicographically smallest source id. savings_ratio compares the worst
    viable candidate against the chosen one.

    Raises NoViableReplicaError when no replica has a known average.
    """
    table = tuple((source_id, report.average_intensity) for source_id, report in replicas)
    viable = [(avg, source_id) for source_id, avg in table if avg is not None]
    if not viable:
        raise NoViableReplicaError("every replica report is all-unknown")
    chosen_avg, chosen_id = min(viable)
    worst_avg = max(avg for avg, _ in viable)
    return ReplicaChoice(
        chosen_source=chosen_id,
        per_replica=table,
        savings_ratio=_savings_ratio(worst_avg, chosen_avg),
    )


# ---------------------------------------------------------------------------
# Overlay FTN selection and threshold migration

@dataclass(frozen=True)
class FtnCandidate:
    """Scored overlay candidate: composite path CI and hop count."""

    ftn_id: str
    average_ci: Optional[float]
    hop_count: int


@dataclass(frozen=True)
class MigrationEvent:
    """Remaining work moved from one FTN to another mid-transfer."""

    at: datetime
    from_ftn: str
    to_ftn: str
    remaining_bytes: int


@dataclass(frozen=True)
class OverlayPlan:
    """Chosen FTN plus the candidate table and (optional) migration policy.

    migrations stays empty at planning time; execution appends events as
    thresholds trip.
    """

    chosen_ftn: str
    per_ftn: tuple[FtnCandidate, ...]
    migration_threshold: Optional[float] = None
    migrations: tuple[MigrationEvent, ...] = field(default_factory=tuple)


def plan_overlay(
    job: TransferJob,
    ftns: Sequence[tuple[str, PathCarbonReport]],
    migration_threshold: Optional[float] = None,
) -> OverlayPlan:
    """Pick the FTN with the lowest composite path CI.

    Equal CIs prefer the path with fewer hops, then the lexicographically
    smallest id: a shorter path at the same intensity means fewer devices
    burning power on the transfer.

    Raises NoViableFtnError when no candidate has a known average.
    """
    table = tuple(
        FtnCandidate(ftn_id, report.average_intensity, len(report.path.hops))
        for ftn_id, report in ftns
    )
    viable = [
        (c.average_ci, c.hop_count, c.ftn_id) for c in table if c.average_ci is not None
    ]
    if not viable:
        raise NoViableFtnError("every FTN report is all-unknown")
    _, _, chosen_id = min(viable)
    return OverlayPlan(
        chosen_ftn=chosen_id,
        per_ftn=table,
        migration_threshold=migration_threshold,
    )


@dataclass(frozen=True)
class ActiveTransfer:
    """Mid-transfer state consulted by the migration policy."""

    job_uuid: str
    current_ftn: str
    remaining_bytes: int
    at: datetime


def migrate_if_exceeded(
    state: ActiveTransfer,
    current_ci: Mapping[str, Optional[float]],
    threshold: float,
) -> Optional[MigrationEvent]:
    """Migrate the remaining work when the current FTN breaches the threshold.

    Fires only when the current FTN's CI exceeds the threshold AND some
    other FTN sits at or below it; the target is the lowest-CI qualifying
    FTN (ties lexicographic). Never migrates to a target at or above the
    current CI, and an unknown current CI never triggers a move.
    """
    if state.remaining_bytes <= 0:
        raise ValueError("migration requires an active transfer with remaining bytes")
    ci_now = current_ci.get(state.current_ftn)
    if ci_now is None or ci_now <= threshold:
        return None
    candidates = [
        (ci, ftn_id)
        for ftn_id, ci in current_ci.items()
        if ftn_id != state.current_ftn and ci is not None and ci <= threshold
    ]
    if not candidates:
        return None
    target_ci, target_id = min(candidates)
    if target_ci >= ci_now:
        return None
    return MigrationEvent(
        at=state.at,
        from_ftn=state.current_ftn,
        to_ftn=target_id,
        remaining_bytes=state.remaining_bytes,
    )


# ---------------------------------------------------------------------------
# Scoring

def carbon_score(record: TransferRecord) -> CarbonScore:
    """Score a completed transfer as bytes / (average CI x duration seconds).

    Zero bytes score zero; a zero CI or zero duration leaves the score
    undefined (UndefinedScoreError).
    """
    duration = record.duration_seconds
    if duration == 0 or record.average_ci == 0:
        raise UndefinedScoreError(
            f"score undefined for job {record.job_uuid}: "
            f"ci={record.average_ci}, duration={duration}"
        )
    return CarbonScore(record.bytes_moved / (record.average_ci * duration))
