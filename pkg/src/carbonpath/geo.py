"""Map public IP addresses to coordinates and grid zones.

Two providers share one interface: an offline CIDR-indexed CSV database
(the canonical choice for reproducible runs) and an online per-IP JSON API
client. Lookups distinguish Unknown (no data; flows into reports) from
ProviderError (I/O failure; aborts the sampling round).
"""

from __future__ import annotations

import abc
import csv
import ipaddress
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Optional

from .clock import Clock, SystemClock
from .errors import ParseError, ProviderError
from .model import GeoLocation, IpAddress

GEO_DB_HEADER = ("cidr", "lat", "lon", "zone")


class GeoProvider(abc.ABC):
    """Resolves a public IP address to a location, or None when unknown."""

    @abc.abstractmethod
    def lookup(self, ip: IpAddress) -> Optional[GeoLocation]:
        """Return the location for ip, or None on a miss.

        Raises ProviderError on I/O failure.
        """


def geolocate(ip: IpAddress, provider: GeoProvider) -> Optional[GeoLocation]:
    """Locate an address, short-circuiting ranges that can never geolocate.

    Private, reserved, and loopback addresses return None without touching
    the provider.
    """
    if not ip.is_public:
        return None
    return provider.lookup(ip)


@dataclass(frozen=True)
class GeoRecord:
    """One CIDR block and its location in the offline database."""

    cidr: ipaddress.IPv4Network | ipaddress.IPv6Network
    latitude: float
    longitude: float
    zone: Optional[str]

    def location(self) -> GeoLocation:
        return GeoLocation(self.latitude, self.longitude, self.zone)


class OfflineGeoDatabase(GeoProvider):
    """Longest-prefix-match index over CIDR records."""

    def __init__(self, records: list[GeoRecord]):
        # Bucket by (version, prefixlen) so lookups scan most-specific first.
        self._buckets: dict[tuple[int, int], dict[int, GeoRecord]] = {}
        for rec in records:
            key = (rec.cidr.version, rec.cidr.prefixlen)
            self._buckets.setdefault(key, {})[int(rec.cidr.network_address)] = rec
        self._prefixes_by_version: dict[int, list[int]] = {}
        for version, prefixlen in self._buckets:
            self._prefixes_by_version.setdefault(version, []).append(prefixlen)
        for lens in self._prefixes_by_version.values():
            lens.sort(reverse=True)

    def lookup(self, ip: IpAddress) -> Optional[GeoLocation]:
        addr = ipaddress.ip_address(ip.text)
        bits = addr.max_prefixlen
        value = int(addr)
        for prefixlen in self._prefixes_by_version.get(addr.version, ()):
            mask = ((1 << prefixlen) - 1) << (bits - prefixlen) if prefixlen else 0
            rec = self._buckets[(addr.version, prefixlen)].get(value & mask)
            if rec is not None:
                return rec.location()
        return None


def load_geo_database(path: str) -> OfflineGeoDatabase:
    """Load a CSV geolocation database (header: cidr,lat,lon,zone).

    An empty zone column means the zone is resolved later from coordinates.

    Raises ParseError with the offending line number on malformed rows.
    """
    records: list[GeoRecord] = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and tuple(h.strip() for h in header) != GEO_DB_HEADER:
                raise ParseError(
                    f"expected header {','.join(GEO_DB_HEADER)}", path=path, line=1
                )
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 4:
                    raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=lineno)
                try:
                    cidr = ipaddress.ip_network(row[0].strip())
                    lat = float(row[1])
                    lon = float(row[2])
                except ValueError as exc:
                    raise ParseError(str(exc), path=path, line=lineno) from exc
                zone = row[3].strip() or None
                try:
                    records.append(GeoRecord(cidr=cidr, latitude=lat, longitude=lon, zone=zone))
                except ValueError as exc:
                    raise ParseError(str(exc), path=path, line=lineno) from exc
    except OSError as exc:
        raise ParseError(f"cannot read geo database: {exc}", path=path) from exc
    return OfflineGeoDatabase(records)


# JSON field names follow the common free per-IP geolocation API shape.
class OnlineGeoClient(GeoProvider):
    """Per-IP HTTP JSON client.

    The endpoint is queried as GET <endpoint>/<ip> and must answer an object
    with keys status ("success"/"fail"), lat, lon, query. Any non-success
    status is a miss, not an error. fetch_json is injectable for tests; the
    default uses requests.
    """

    def __init__(
        self,
        endpoint: str,
        fetch_json: Optional[Callable[[str], dict]] = None,
        timeout_s: float = 10.0,
    ):
        self._endpoint = endpoint.rstrip("/")
        self._timeout = timeout_s
        self._fetch = fetch_json if fetch_json is not None else self._default_fetch

    def _default_fetch(self, url: str) -> dict:
        import requests

        response = requests.get(url, timeout=self._timeout)
        response.raise_for_status()
        return response.json()

    def lookup(self, ip: IpAddress) -> Optional[GeoLocation]:
        try:
            payload = self._fetch(f"{self._endpoint}/{ip.text}")
        except Exception as exc:
            raise ProviderError(f"geolocation query for {ip} failed: {exc}") from exc
        if payload.get("status") != "success":
            return None
        try:
            return GeoLocation(float(payload["lat"]), float(payload["lon"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed geolocation response for {ip}: {exc}") from exc


class CachedGeoProvider(GeoProvider):
    """TTL cache in front of another provider; misses are cached too.

    Expired entries are never served. Provider errors are not cached.
    """

    DEFAULT_TTL_S = 24 * 3600.0

    def __init__(self, inner: GeoProvider, ttl_s: float = DEFAULT_TTL_S, clock: Optional[Clock] = None):
        if ttl_s <= 0:
            raise ValueError("ttl_s must be positive")
        self._inner = inner
        self._ttl = timedelta(seconds=ttl_s)
        self._clock = clock if clock is not None else SystemClock()
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[datetime, Optional[GeoLocation]]] = {}

    def lookup(self, ip: IpAddress) -> Optional[GeoLocation]:
        now = self._clock.now()
        with self._lock:
            hit = self._entries.get(ip.text)
            if hit is not None and now - hit[0] < self._ttl:
                return hit[1]
        value = self._inner.lookup(ip)
        with self._lock:
            self._entries[ip.text] = (now, value)
        return value
