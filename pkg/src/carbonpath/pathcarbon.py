"""Compose discovery, geolocation, and carbon lookup into path reports.

measure_path_carbon grades one path at one instant; monitor_path repeats
discovery+measurement on a fixed interval and appends each report to a
JSON-lines sink, producing the path-level carbon time series that the
scheduling policies consume.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import IO, Iterator, Optional

from .carbon import CarbonProvider, CarbonQuery, ZoneMap, zone_for_location
from .clock import Clock, SystemClock, format_utc
from .discovery import ProbeConfig, Prober, discover_path
from .errors import MonitorError, ProbeError, ProviderError
from .geo import GeoProvider, geolocate
from .model import (
    DESTINATION_TTL,
    SOURCE_TTL,
    GeoLocation,
    Hop,
    HopReading,
    IpAddress,
    NetworkPath,
    PathCarbonReport,
)

logger = logging.getLogger(__name__)


def _read_address(
    ttl: Optional[int],
    address: Optional[IpAddress],
    at: datetime,
    geo: GeoProvider,
    carbon: CarbonProvider,
    zone_map: Optional[ZoneMap],
) -> HopReading:
    if address is None:
        return HopReading(ttl=ttl, address=None, location=None, intensity=None)
    location = geolocate(address, geo)
    if location is None:
        return HopReading(ttl=ttl, address=address, location=None, intensity=None)
    if location.zone is not None:
        zone = location.zone
    elif zone_map is not None:
        zone = zone_for_location(location, zone_map)
    else:
        zone = None
    if zone is None:
        return HopReading(ttl=ttl, address=address, location=location, intensity=None)
    intensity = carbon.intensity(CarbonQuery(zone=zone, at=at))
    located = GeoLocation(location.latitude, location.longitude, zone)
    return HopReading(ttl=ttl, address=address, location=located, intensity=intensity)


def measure_path_carbon(
    path: NetworkPath,
    at: datetime,
    geo: GeoProvider,
    carbon: CarbonProvider,
    zone_map: Optional[ZoneMap] = None,
) -> PathCarbonReport:
    """Geolocate and carbon-grade every hop of a path at one instant.

    The two end systems are included as pseudo-hops (source at ttl 0,
    destination last); hops that cannot be located or have no carbon data
    stay in the report as unknowns. Provider errors propagate.
    """
    readings = [_read_address(SOURCE_TTL, path.source_host, at, geo, carbon, zone_map)]
    for hop in path.hops:
        readings.append(_read_address(hop.ttl, hop.address, at, geo, carbon, zone_map))
    readings.append(
        _read_address(DESTINATION_TTL, path.destination_host, at, geo, carbon, zone_map)
    )
    return PathCarbonReport.from_readings(path=path, at=at, readings=readings)


# ---------------------------------------------------------------------------
# JSON serialization (report sink schema)

def path_to_json(path: NetworkPath) -> dict:
    return {
        "source": path.source_host.text,
        "destination": path.destination_host.text,
        "discovered_at": format_utc(path.discovered_at),
        "reached": path.reached,
        "hops": [
            {
                "ttl": h.ttl,
                "ip": h.address.text if h.address is not None else None,
                "rtt_ms": h.rtt_ms,
            }
            for h in path.hops
        ],
    }


def report_to_json(report: PathCarbonReport) -> dict:
    """Render a report as one sink record.

    Pseudo-hop ttls serialize as 0 (source) and null (destination).
    """
    return {
        "timestamp": format_utc(report.at),
        "source": report.path.source_host.text,
        "destination": report.path.destination_host.text,
        "hops": [
            {
                "ttl": r.ttl,
                "ip": r.address.text if r.address is not None else None,
                "zone": r.location.zone if r.location is not None else None,
                "intensity": r.intensity,
            }
            for r in report.readings
        ],
        "average_intensity": report.average_intensity,
        "known_hops": report.known_hop_count,
        "unknown_hops": report.unknown_hop_count,
    }


class ReportSink:
    """Append-only JSON-lines sink for path carbon reports."""

    def __init__(self, stream: IO[str]):
        self._stream = stream

    def append(self, record: dict) -> None:
        try:
            self._stream.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._stream.flush()
        except OSError as exc:
            raise MonitorError(f"report sink write failed: {exc}") from exc


# ---------------------------------------------------------------------------
# Periodic monitor

@dataclass(frozen=True)
class MonitorConfig:
    """Measurement cadence; duration None runs until externally stopped."""

    interval_s: float = 3600.0
    duration_s: Optional[float] = None

    def __post_init__(self):
        if self.interval_s <= 0:
            raise ValueError("interval_s must be positive")
        if self.duration_s is not None and self.duration_s < 0:
            raise ValueError("duration_s must be nonnegative")


def monitor_path(
    destination: IpAddress,
    prober: Prober,
    probe_config: ProbeConfig,
    monitor_config: MonitorConfig,
    geo: GeoProvider,
    carbon: CarbonProvider,
    zone_map: Optional[ZoneMap] = None,
    clock: Optional[Clock] = None,
    sink: Optional[ReportSink] = None,
) -> Iterator[PathCarbonReport]:
    """Rediscover and measure the path every interval, yielding reports.

    The path is rediscovered at each tick because routes change; each report
    records the path it actually measured. A provider or probe failure skips
    that tick and the run continues, since long measurement campaigns must
    survive transient faults. Sink write failures are fatal (MonitorError).

    Runs ceil(duration/interval) ticks: every tick that starts strictly
    before the duration elapses. duration 0 yields nothing.
    """
    clock = clock if clock is not None else SystemClock()
    started = clock.now()
    tick = 0
    while True:
        if monitor_config.duration_s is not None:
            elapsed = (clock.now() - started).total_seconds()
            if elapsed >= monitor_config.duration_s:
                return
        try:
            at = clock.now()
            path = discover_path(destination, probe_config, prober, at=at)
            report = measure_path_carbon(path, at, geo, carbon, zone_map)
        except (ProviderError, ProbeError) as exc:
            logger.warning("monitor tick %d skipped: %s", tick, exc)
        else:
            if sink is not None:
                sink.append(report_to_json(report))
            yield report
        tick += 1
        clock.sleep(monitor_config.interval_s)
