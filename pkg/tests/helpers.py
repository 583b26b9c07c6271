"""Shared builders and independent oracles used across test modules.

Oracles here deliberately avoid the library's own lookup/aggregation code:
brute-force linear scans and per-second integration keep them honest.
"""

from __future__ import annotations

import math
from datetime import datetime, timedelta

from carbonpath.clock import utc
from carbonpath.model import (
    CarbonSample,
    CarbonSeries,
    Hop,
    HopReading,
    IpAddress,
    NetworkPath,
    PathCarbonReport,
    TransferJob,
)

T0 = utc(2024, 4, 14)


def series_of(values, zone="Z1", start=T0, step_s=3600.0) -> CarbonSeries:
    samples = tuple(
        CarbonSample(zone=zone, timestamp=start + timedelta(seconds=i * step_s), intensity=float(v))
        for i, v in enumerate(values)
    )
    return CarbonSeries(zone=zone, samples=samples)


def job_of(
    bytes_=3_600_000_000,
    throughput=1_000_000.0,
    earliest=T0,
    deadline=None,
    uuid="job-test",
    source="src",
    destination="dst",
) -> TransferJob:
    if deadline is None:
        deadline = earliest + timedelta(hours=48)
    return TransferJob(
        job_uuid=uuid,
        bytes=bytes_,
        source=source,
        destination=destination,
        earliest_start=earliest,
        deadline=deadline,
        estimated_throughput=throughput,
    )


def stub_report(average_ci, hop_count=3, at=T0) -> PathCarbonReport:
    """Candidate report carrying a stated average CI and hop count."""
    endpoint = IpAddress("0.0.0.0")
    hops = tuple(Hop(ttl=i + 1, address=None, rtt_ms=None) for i in range(hop_count))
    path = NetworkPath(
        source_host=endpoint,
        destination_host=endpoint,
        hops=hops,
        discovered_at=at,
        reached=False,
    )
    readings = tuple(
        HopReading(ttl=None, address=None, location=None, intensity=average_ci)
        for _ in range(hop_count + 2)
    )
    return PathCarbonReport.from_readings(path=path, at=at, readings=readings)


# ---------------------------------------------------------------------------
# Independent oracles

def oracle_value_at(series: CarbonSeries, at: datetime):
    """Linear scan for the sample whose interval contains the query time."""
    value = None
    for sample in series.samples:
        if sample.timestamp <= at:
            value = sample.intensity
        else:
            break
    return value


def oracle_twa(series: CarbonSeries, start: datetime, end: datetime) -> float:
    """1-second-resolution brute-force integration of the step function.

    Only exact when sample times and window bounds are whole seconds.
    """
    total = 0.0
    steps = 0
    at = start
    one = timedelta(seconds=1)
    while at < end:
        value = oracle_value_at(series, at)
        assert value is not None, "oracle window must start inside coverage"
        total += value
        steps += 1
        at += one
    return total / steps


def oracle_time_shift(
    series: CarbonSeries, job: TransferJob, step_s: float
) -> tuple[datetime, float]:
    """Exhaustive search over the step grid, ties to the earliest start."""
    duration = timedelta(seconds=job.bytes / job.estimated_throughput)
    best = None
    best_avg = math.inf
    k = 0
    while True:
        start = job.earliest_start + timedelta(seconds=k * step_s)
        if start + duration > job.deadline:
            break
        avg = oracle_twa(series, start, start + duration)
        if avg < best_avg:
            best_avg = avg
            best = start
        k += 1
    assert best is not None
    return best, best_avg
