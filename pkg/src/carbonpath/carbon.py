"""Resolve (zone, time) queries to grid carbon intensity.

Providers behind one interface: recorded trace files for replayable runs,
a live HTTP client for operation, and a synthetic generator for desk-scale
fixtures. A query with at=None means "now" and resolves against the
injected clock.
"""

from __future__ import annotations

import abc
import csv
import math
import os
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Optional

from .clock import Clock, SystemClock, parse_utc
from .errors import ParseError, ProviderError
from .model import CarbonSample, CarbonSeries, GeoLocation

TRACE_HEADER = ("timestamp", "zone", "intensity_gco2_kwh")
ZONE_MAP_HEADER = ("zone", "lat", "lon")


@dataclass(frozen=True)
class CarbonQuery:
    """A zone and an instant; at=None asks for the current intensity."""

    zone: str
    at: Optional[datetime] = None

    def __post_init__(self):
        if not self.zone:
            raise ValueError("zone must be nonempty")


class CarbonProvider(abc.ABC):
    """Answers carbon queries with gCO2eq/kWh, or None when unknown."""

    @abc.abstractmethod
    def intensity(self, query: CarbonQuery) -> Optional[float]:
        """Raises ProviderError on I/O failure."""


def intensity_at(query: CarbonQuery, provider: CarbonProvider) -> Optional[float]:
    """Resolve one carbon query against a provider."""
    return provider.intensity(query)


# ---------------------------------------------------------------------------
# Recorded traces

class TraceStore:
    """Immutable map from zone to its recorded carbon series."""

    def __init__(self, series: dict[str, CarbonSeries]):
        self._series = dict(series)

    def zones(self) -> list[str]:
        return sorted(self._series)

    def get(self, zone: str) -> Optional[CarbonSeries]:
        return self._series.get(zone)

    def __contains__(self, zone: str) -> bool:
        return zone in self._series


def load_trace_csv(path: str) -> dict[str, list[CarbonSample]]:
    """Read one trace CSV (header: timestamp,zone,intensity_gco2_kwh)."""
    by_zone: dict[str, list[CarbonSample]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and tuple(h.strip() for h in header) != TRACE_HEADER:
                raise ParseError(f"expected header {','.join(TRACE_HEADER)}", path=path, line=1)
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 3:
                    raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
                try:
                    sample = CarbonSample(
                        zone=row[1].strip(),
                        timestamp=parse_utc(row[0].strip()),
                        intensity=float(row[2]),
                    )
                except ValueError as exc:
                    raise ParseError(str(exc), path=path, line=lineno) from exc
                by_zone.setdefault(sample.zone, []).append(sample)
    except OSError as exc:
        raise ParseError(f"cannot read trace file: {exc}", path=path) from exc
    return by_zone


def load_trace_store(paths: list[str]) -> TraceStore:
    """Build a TraceStore from one or more trace CSV files."""
    by_zone: dict[str, list[CarbonSample]] = {}
    for path in paths:
        for zone, samples in load_trace_csv(path).items():
            by_zone.setdefault(zone, []).extend(samples)
    series = {}
    for zone, samples in by_zone.items():
        samples.sort(key=lambda s: s.timestamp)
        series[zone] = CarbonSeries(zone=zone, samples=tuple(samples))
    return TraceStore(series)


def load_trace_dir(directory: str) -> TraceStore:
    paths = sorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.endswith(".csv")
    )
    return load_trace_store(paths)


class TraceCarbonProvider(CarbonProvider):
    """Answers from recorded series with step semantics.

    Queries before a zone's first sample, or for zones absent from the
    store, return None. at=None resolves against the injected clock.
    """

    def __init__(self, store: TraceStore, clock: Optional[Clock] = None):
        self._store = store
        self._clock = clock if clock is not None else SystemClock()

    @property
    def store(self) -> TraceStore:
        return self._store

    def intensity(self, query: CarbonQuery) -> Optional[float]:
        series = self._store.get(query.zone)
        if series is None or len(series) == 0:
            return None
        at = query.at if query.at is not None else self._clock.now()
        return series.value_at(at)


# ---------------------------------------------------------------------------
# Live API client

class LiveCarbonClient(CarbonProvider):
    """HTTP client for a live carbon-intensity API.

    Contract: GET <endpoint>?zone=<zone>[&datetime=<iso>] answering a JSON
    object with keys zone, carbonIntensity, datetime. The auth token is read
    from the environment variable named at construction and sent as an
    auth-token header. fetch_json is injectable for tests.
    """

    def __init__(
        self,
        endpoint: str,
        token_env: Optional[str] = None,
        fetch_json: Optional[Callable[[str, dict], dict]] = None,
        timeout_s: float = 10.0,
    ):
        self._endpoint = endpoint
        self._token_env = token_env
        self._timeout = timeout_s
        self._fetch = fetch_json if fetch_json is not None else self._default_fetch

    def _default_fetch(self, url: str, params: dict) -> dict:
        import requests

        headers = {}
        if self._token_env:
            token = os.environ.get(self._token_env)
            if not token:
                raise ProviderError(f"environment variable {self._token_env} is not set")
            headers["auth-token"] = token
        response = requests.get(url, params=params, headers=headers, timeout=self._timeout)
        response.raise_for_status()
        return response.json()

    def intensity(self, query: CarbonQuery) -> Optional[float]:
        params = {"zone": query.zone}
        if query.at is not None:
            params["datetime"] = query.at.isoformat()
        try:
            payload = self._fetch(self._endpoint, params)
        except ProviderError:
            raise
        except Exception as exc:
            raise ProviderError(f"carbon query for {query.zone} failed: {exc}") from exc
        value = payload.get("carbonIntensity")
        if value is None:
            return None
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ProviderError(f"malformed carbon response for {query.zone}: {exc}") from exc


class CachedCarbonProvider(CarbonProvider):
    """Cache in front of another provider.

    "Now" answers expire after ttl_s (default 10 minutes); historical
    answers are immutable and cached forever. Errors are never cached.
    """

    DEFAULT_TTL_S = 600.0

    def __init__(self, inner: CarbonProvider, ttl_s: float = DEFAULT_TTL_S, clock: Optional[Clock] = None):
        if ttl_s <= 0:
            raise ValueError("ttl_s must be positive")
        self._inner = inner
        self._ttl = timedelta(seconds=ttl_s)
        self._clock = clock if clock is not None else SystemClock()
        self._lock = threading.Lock()
        self._historical: dict[tuple[str, datetime], Optional[float]] = {}
        self._live: dict[str, tuple[datetime, Optional[float]]] = {}

    def intensity(self, query: CarbonQuery) -> Optional[float]:
        if query.at is not None:
            key = (query.zone, query.at)
            with self._lock:
                if key in self._historical:
                    return self._historical[key]
            value = self._inner.intensity(query)
            with self._lock:
                self._historical[key] = value
            return value
        now = self._clock.now()
        with self._lock:
            hit = self._live.get(query.zone)
            if hit is not None and now - hit[0] < self._ttl:
                return hit[1]
        value = self._inner.intensity(query)
        with self._lock:
            self._live[query.zone] = (now, value)
        return value


# ---------------------------------------------------------------------------
# Coordinate -> zone resolution

class ZoneMap:
    """Zone centroids used to resolve coordinates to the nearest grid zone."""

    def __init__(self, centroids: dict[str, tuple[float, float]]):
        if not centroids:
            raise ValueError("zone map must be nonempty")
        self._centroids = dict(centroids)

    def items(self):
        return self._centroids.items()

    def __len__(self) -> int:
        return len(self._centroids)


def load_zone_map(path: str) -> ZoneMap:
    """Load zone centroids from CSV (header: zone,lat,lon)."""
    centroids: dict[str, tuple[float, float]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and tuple(h.strip() for h in header) != ZONE_MAP_HEADER:
                raise ParseError(f"expected header {','.join(ZONE_MAP_HEADER)}", path=path, line=1)
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 3:
                    raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
                try:
                    centroids[row[0].strip()] = (float(row[1]), float(row[2]))
                except ValueError as exc:
                    raise ParseError(str(exc), path=path, line=lineno) from exc
    except OSError as exc:
        raise ParseError(f"cannot read zone map: {exc}", path=path) from exc
    return ZoneMap(centroids)


_EARTH_RADIUS_KM = 6371.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two coordinates, in kilometers."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * _EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def zone_for_location(loc: GeoLocation, zonemap: ZoneMap) -> str:
    """Resolve a location to a grid zone.

    A location that already carries a zone keeps it; otherwise the nearest
    centroid by great-circle distance wins, with exact ties broken by the
    lexicographically smallest zone id.
    """
    if loc.zone is not None:
        return loc.zone
    best = min(
        zonemap.items(),
        key=lambda kv: (haversine_km(loc.latitude, loc.longitude, kv[1][0], kv[1][1]), kv[0]),
    )
    return best[0]


# ---------------------------------------------------------------------------
# Synthetic series

def synth_series(
    zone: str,
    start: datetime,
    hours: int,
    base: float,
    amplitude: float,
    period_hours: float = 24.0,
    seed: int = 0,
    noise: float = 0.0,
) -> CarbonSeries:
    """Generate an hourly sinusoidal series, clamped at zero.

    Sample i is base + amplitude*sin(2*pi*i/period_hours) plus uniform noise
    in [-noise, +noise] drawn from a seeded generator; the same seed always
    reproduces the same series. amplitude must not exceed base so the
    noiseless signal stays nonnegative.
    """
    if hours < 1:
        raise ValueError("hours must be >= 1")
    if amplitude < 0 or base < 0:
        raise ValueError("base and amplitude must be nonnegative")
    if amplitude > base:
        raise ValueError("amplitude must not exceed base")
    if period_hours <= 0:
        raise ValueError("period_hours must be positive")
    rng = random.Random(seed)
    samples = []
    for i in range(hours):
        value = base + amplitude * math.sin(2 * math.pi * i / period_hours)
        if noise:
            value += rng.uniform(-noise, noise)
        samples.append(
            CarbonSample(zone=zone, timestamp=start + timedelta(hours=i), intensity=max(0.0, value))
        )
    return CarbonSeries(zone=zone, samples=tuple(samples))
