"""Shared domain types and the pure aggregation math used by every module.

Conventions used throughout the toolkit:

* Unknown data is ``None`` (an unlocatable hop, a zone with no reading).
  Unknowns are excluded from averages but surfaced in counts, so data gaps
  stay visible instead of silently biasing an aggregate.
* Carbon series are piecewise-constant step functions: a sample's value
  holds from its timestamp until the next sample. Carbon APIs publish
  interval values, and step semantics keep test oracles exact.
* All timestamps are timezone-aware UTC; durations are float seconds.
"""

from __future__ import annotations

import ipaddress
import math
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import NamedTuple, Optional, Sequence

from .errors import EmptyPathError, NoCoverageError

# ---------------------------------------------------------------------------
# Addresses and hops

# Explicit block lists: private is RFC 1918 plus RFC 4193 ULA, loopback is
# the loopback blocks, reserved covers link-local/multicast/unspecified and
# futures. Documentation ranges (192.0.2.0/24 etc.) stay public on purpose
# so offline fixtures can use them as geolocatable addresses.
_PRIVATE_BLOCKS = [
    ipaddress.ip_network("10.0.0.0/8"),
    ipaddress.ip_network("172.16.0.0/12"),
    ipaddress.ip_network("192.168.0.0/16"),
    ipaddress.ip_network("fc00::/7"),
]
_LOOPBACK_BLOCKS = [
    ipaddress.ip_network("127.0.0.0/8"),
    ipaddress.ip_network("::1/128"),
]
_RESERVED_BLOCKS = [
    ipaddress.ip_network("0.0.0.0/8"),
    ipaddress.ip_network("169.254.0.0/16"),
    ipaddress.ip_network("224.0.0.0/4"),
    ipaddress.ip_network("240.0.0.0/4"),
    ipaddress.ip_network("255.255.255.255/32"),
    ipaddress.ip_network("fe80::/10"),
    ipaddress.ip_network("ff00::/8"),
    ipaddress.ip_network("::/128"),
]


class AddressKind(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"
    RESERVED = "reserved"
    LOOPBACK = "loopback"


def classify_address(text: str) -> AddressKind:
    """Classify a textual IPv4/IPv6 address by its range."""
    addr = ipaddress.ip_address(text)
    for block in _LOOPBACK_BLOCKS:
        if addr in block:
            return AddressKind.LOOPBACK
    for block in _PRIVATE_BLOCKS:
        if addr in block:
            return AddressKind.PRIVATE
    for block in _RESERVED_BLOCKS:
        if addr in block:
            return AddressKind.RESERVED
    return AddressKind.PUBLIC


@dataclass(frozen=True)
class IpAddress:
    """A textual IP address plus its range classification."""

    text: str
    kind: AddressKind = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "text", str(ipaddress.ip_address(self.text)))
        object.__setattr__(self, "kind", classify_address(self.text))

    @property
    def is_public(self) -> bool:
        return self.kind is AddressKind.PUBLIC

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Hop:
    """One router on a discovered path. address None marks an unresponsive TTL."""

    ttl: int
    address: Optional[IpAddress]
    rtt_ms: Optional[float] = None

    def __post_init__(self):
        if self.ttl < 1:
            raise ValueError(f"hop ttl must be >= 1, got {self.ttl}")
        if (self.address is None) != (self.rtt_ms is None):
            raise ValueError("rtt_ms must be present exactly when the hop responded")
        if self.rtt_ms is not None and self.rtt_ms < 0:
            raise ValueError("rtt_ms must be nonnegative")

    @property
    def responded(self) -> bool:
        return self.address is not None


@dataclass(frozen=True)
class NetworkPath:
    """Ordered hop list between two end systems.

    ``reached`` is data, not an error: networks drop or mask probe replies,
    and partial paths must flow through the measurement pipeline.
    """

    source_host: IpAddress
    destination_host: IpAddress
    hops: tuple[Hop, ...]
    discovered_at: datetime
    reached: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hops", tuple(self.hops))
        ttls = [h.ttl for h in self.hops]
        if any(b <= a for a, b in zip(ttls, ttls[1:])):
            raise ValueError("hop ttl values must be strictly increasing")
        if self.reached and self.hops:
            last = self.hops[-1]
            if last.address is None or last.address != self.destination_host:
                raise ValueError("a reached path must end at the destination host")


# ---------------------------------------------------------------------------
# Geography and carbon series

@dataclass(frozen=True)
class GeoLocation:
    """Latitude/longitude of a hop, optionally tagged with its grid zone.

    Providers that know the grid zone set it directly; otherwise it is
    resolved later from coordinates via a zone map.
    """

    latitude: float
    longitude: float
    zone: Optional[str] = None

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if self.zone is not None and not self.zone:
            raise ValueError("zone must be nonempty when present")


@dataclass(frozen=True)
class CarbonSample:
    """One timestamped carbon-intensity reading (gCO2eq/kWh) for a zone."""

    zone: str
    timestamp: datetime
    intensity: float

    def __post_init__(self):
        if not self.zone:
            raise ValueError("zone must be nonempty")
        if self.intensity < 0:
            raise ValueError("intensity must be nonnegative")


_DEFAULT_SAMPLE_INTERVAL = 3600.0


@dataclass(frozen=True)
class CarbonSeries:
    """Time-ordered carbon samples for one zone, read as a step function."""

    zone: str
    samples: tuple[CarbonSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        for s in self.samples:
            if s.zone != self.zone:
                raise ValueError(f"sample zone {s.zone!r} does not match series zone {self.zone!r}")
        times = tuple(s.timestamp for s in self.samples)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample timestamps must be strictly increasing")
        object.__setattr__(self, "_times", times)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def start(self) -> datetime:
        if not self.samples:
            raise NoCoverageError(f"series for zone {self.zone!r} is empty")
        return self.samples[0].timestamp

    @property
    def sample_interval(self) -> float:
        """Modal spacing between consecutive samples, in seconds.

        Falls back to one hour when the series has fewer than two samples,
        matching the usual publication interval of grid carbon APIs.
        """
        times: tuple[datetime, ...] = self._times  # type: ignore[attr-defined]
        if len(times) < 2:
            return _DEFAULT_SAMPLE_INTERVAL
        gaps = Counter((b - a).total_seconds() for a, b in zip(times, times[1:]))
        best = max(gaps.items(), key=lambda kv: (kv[1], -kv[0]))
        return best[0]

    @property
    def coverage_end(self) -> datetime:
        """End of coverage: the last sample holds for one nominal interval."""
        last = self.samples[-1].timestamp
        return last + timedelta(seconds=self.sample_interval)

    def value_at(self, at: datetime) -> Optional[float]:
        """Step-function value at ``at``; None before the first sample."""
        times: tuple[datetime, ...] = self._times  # type: ignore[attr-defined]
        idx = bisect_right(times, at) - 1
        if idx < 0:
            return None
        return self.samples[idx].intensity


def time_weighted_average(series: CarbonSeries, window_start: datetime, window_end: datetime) -> float:
    """Integral of the step function over [start, end) divided by the window length.

    The window must start at or after the first sample; the last sample's
    value holds for the remainder of any window that extends past it.

    Raises:
        NoCoverageError: empty series or window starting before the first sample.
        ValueError: degenerate window.
    """
    if window_start >= window_end:
        raise ValueError("window_start must precede window_end")
    if not series.samples or window_start < series.start:
        raise NoCoverageError(
            f"series for zone {series.zone!r} does not cover window start {window_start.isoformat()}"
        )
    times: tuple[datetime, ...] = series._times  # type: ignore[attr-defined]
    idx = bisect_right(times, window_start) - 1
    total = 0.0
    cursor = window_start
    for j in range(idx, len(times)):
        seg_end = times[j + 1] if j + 1 < len(times) else window_end
        upper = min(seg_end, window_end)
        if upper > cursor:
            total += series.samples[j].intensity * (upper - cursor).total_seconds()
            cursor = upper
        if cursor >= window_end:
            break
    return total / (window_end - window_start).total_seconds()


# ---------------------------------------------------------------------------
# Path aggregates

class PathAverage(NamedTuple):
    """Mean carbon intensity over the known entries of a per-hop list.

    average is None when every entry was unknown.
    """

    average: Optional[float]
    known: int
    unknown: int

    @property
    def all_unknown(self) -> bool:
        return self.average is None


def path_average_intensity(per_hop_intensities: Sequence[Optional[float]]) -> PathAverage:
    """Aggregate per-hop intensities, excluding unknowns from the mean.

    Raises:
        EmptyPathError: the input list is empty.
    """
    if len(per_hop_intensities) == 0:
        raise EmptyPathError("cannot aggregate an empty per-hop list")
    known = [v for v in per_hop_intensities if v is not None]
    unknown = len(per_hop_intensities) - len(known)
    if not known:
        return PathAverage(None, 0, unknown)
    return PathAverage(sum(known) / len(known), len(known), unknown)


SOURCE_TTL = 0  # pseudo-hop ttl for the sending end system
DESTINATION_TTL = None  # pseudo-hop ttl for the receiving end system (serialized as null)


@dataclass(frozen=True)
class HopReading:
    """One row of a path carbon report: hop identity, location, intensity.

    End systems appear as pseudo-hops: the source at ttl 0, the destination
    with ttl None (there is no finite TTL for the receiving host).
    """

    ttl: Optional[int]
    address: Optional[IpAddress]
    location: Optional[GeoLocation]
    intensity: Optional[float]

    @property
    def known(self) -> bool:
        return self.intensity is not None


@dataclass(frozen=True)
class PathCarbonReport:
    """Per-hop carbon intensities plus the path aggregate at one instant.

    The two end systems are always included as pseudo-hops; they dominate
    the energy cost of a transfer and belong in every path aggregate.
    """

    path: NetworkPath
    at: datetime
    readings: tuple[HopReading, ...]
    average_intensity: Optional[float]
    known_hop_count: int
    unknown_hop_count: int

    @classmethod
    def from_readings(
        cls, path: NetworkPath, at: datetime, readings: Sequence[HopReading]
    ) -> "PathCarbonReport":
        agg = path_average_intensity([r.intensity for r in readings])
        return cls(
            path=path,
            at=at,
            readings=tuple(readings),
            average_intensity=agg.average,
            known_hop_count=agg.known,
            unknown_hop_count=agg.unknown,
        )

    @property
    def all_unknown(self) -> bool:
        return self.average_intensity is None


# ---------------------------------------------------------------------------
# Transfers and scoring

@dataclass(frozen=True)
class TransferJob:
    """A requested movement of bytes inside a start/deadline window.

    estimated_throughput is supplied by the caller (from history or a
    separate predictor); the toolkit does not model throughput itself.
    """

    job_uuid: str
    bytes: int
    source: str
    destination: str
    earliest_start: datetime
    deadline: datetime
    estimated_throughput: float

    def __post_init__(self):
        if self.bytes < 0:
            raise ValueError("bytes must be nonnegative")
        if self.estimated_throughput <= 0:
            raise ValueError("estimated_throughput must be positive")
        if self.earliest_start >= self.deadline:
            raise ValueError("earliest_start must precede deadline")
        window = (self.deadline - self.earliest_start).total_seconds()
        if self.estimated_duration > window:
            raise ValueError(
                f"estimated duration {self.estimated_duration:.0f}s does not fit the "
                f"{window:.0f}s window"
            )

    @property
    def estimated_duration(self) -> float:
        """Estimated transfer duration in seconds."""
        return self.bytes / self.estimated_throughput


@dataclass(frozen=True)
class TransferRecord:
    """Execution accounting for a completed transfer.

    average_ci is the time-weighted mean carbon intensity over the transfer
    window, gCO2eq/kWh.
    """

    job_uuid: str
    bytes_moved: int
    started_at: datetime
    finished_at: datetime
    average_ci: float
    ftn_id: str

    def __post_init__(self):
        if self.bytes_moved < 0:
            raise ValueError("bytes_moved must be nonnegative")
        if self.finished_at <= self.started_at:
            raise ValueError("finished_at must follow started_at")
        if self.average_ci < 0:
            raise ValueError("average_ci must be nonnegative")

    @property
    def duration_seconds(self) -> float:
        return (self.finished_at - self.started_at).total_seconds()


@dataclass(frozen=True)
class CarbonScore:
    """bytes / (CI x duration) for a completed transfer.

    As printed, the value grows with bytes and shrinks as the grid gets
    dirtier or the transfer slower: it reads as throughput per unit carbon
    intensity, so "higher is better". The formula is kept exactly in this
    form; callers comparing scores must keep units consistent.
    """

    value: float

    def __post_init__(self):
        if self.value < 0 or math.isnan(self.value):
            raise ValueError("carbon score must be a nonnegative number")
