"""Toolkit configuration: provider selection, probe/monitor defaults, store.

The config is a JSON file found via --config or the CARBONPATH_CONFIG
environment variable. Exactly one geolocation provider and one carbon
provider must be active, referenced input paths must exist at load time,
and API tokens are named (by environment variable) but never stored.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .carbon import (
    CachedCarbonProvider,
    CarbonProvider,
    LiveCarbonClient,
    TraceCarbonProvider,
    ZoneMap,
    load_trace_dir,
    load_zone_map,
)
from .clock import Clock
from .discovery import ProbeConfig, Prober, SimulatedProber, TopologyHop
from .errors import ConfigError, ParseError
from .geo import CachedGeoProvider, GeoProvider, OnlineGeoClient, load_geo_database
from .model import IpAddress

CONFIG_ENV = "CARBONPATH_CONFIG"


@dataclass
class Config:
    geo_offline_db: Optional[str] = None
    geo_online_endpoint: Optional[str] = None
    carbon_trace_dir: Optional[str] = None
    carbon_online_endpoint: Optional[str] = None
    carbon_token_env: Optional[str] = None
    zone_map_path: Optional[str] = None
    prober_kind: str = "simulated"  # simulated | icmp
    topology_file: Optional[str] = None
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    monitor_interval_s: float = 3600.0
    monitor_duration_s: Optional[float] = None
    store_dir: str = "./carbonpath-store"
    metrics_source: str = "system"  # system | synthetic
    metrics_script: Optional[str] = None

    def validate(self) -> None:
        geo_active = [p for p in (self.geo_offline_db, self.geo_online_endpoint) if p]
        if len(geo_active) != 1:
            raise ConfigError("exactly one geo provider (offline_db or online_endpoint) must be set")
        carbon_active = [p for p in (self.carbon_trace_dir, self.carbon_online_endpoint) if p]
        if len(carbon_active) != 1:
            raise ConfigError(
                "exactly one carbon provider (trace_dir or online_endpoint) must be set"
            )
        for label, path in (
            ("geo.offline_db", self.geo_offline_db),
            ("carbon.trace_dir", self.carbon_trace_dir),
            ("zone_map", self.zone_map_path),
            ("prober.topology_file", self.topology_file),
            ("metrics.script", self.metrics_script),
        ):
            if path and not os.path.exists(path):
                raise ConfigError(f"{label} path does not exist: {path}")
        if self.prober_kind not in ("simulated", "icmp"):
            raise ConfigError(f"unknown prober kind {self.prober_kind!r}")
        if self.prober_kind == "simulated" and not self.topology_file:
            raise ConfigError("simulated prober needs a topology_file")
        if self.metrics_source not in ("system", "synthetic"):
            raise ConfigError(f"unknown metrics source {self.metrics_source!r}")

    # -- provider construction ----------------------------------------------

    def build_geo(self, clock: Optional[Clock] = None) -> GeoProvider:
        if self.geo_offline_db:
            provider: GeoProvider = load_geo_database(self.geo_offline_db)
        else:
            provider = OnlineGeoClient(self.geo_online_endpoint)
        return CachedGeoProvider(provider, clock=clock)

    def build_carbon(self, clock: Optional[Clock] = None) -> CarbonProvider:
        if self.carbon_trace_dir:
            provider: CarbonProvider = TraceCarbonProvider(load_trace_dir(self.carbon_trace_dir), clock=clock)
        else:
            provider = LiveCarbonClient(self.carbon_online_endpoint, token_env=self.carbon_token_env)
        return CachedCarbonProvider(provider, clock=clock)

    def build_zone_map(self) -> Optional[ZoneMap]:
        if self.zone_map_path:
            return load_zone_map(self.zone_map_path)
        return None

    def build_prober(self, destination: str) -> Prober:
        if self.prober_kind == "icmp":
            from .rawprobe import IcmpProber

            return IcmpProber(destination)
        return _prober_from_topology_file(self.topology_file, destination)


def _prober_from_topology_file(path: str, destination: str) -> SimulatedProber:
    """Build a simulated prober for one destination from a topology file.

    The file holds one topology object or a list of them, each shaped like
    a world topology entry: {source, destination, hops: [{address, rtt_ms,
    drop?}]}.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read topology file: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=path) from exc
    entries = doc if isinstance(doc, list) else [doc]
    for entry in entries:
        if entry.get("destination") == destination:
            try:
                hops = tuple(
                    TopologyHop(
                        address=IpAddress(h["address"]),
                        rtt_ms=float(h.get("rtt_ms", 1.0)),
                        drop=bool(h.get("drop", False)),
                    )
                    for h in entry["hops"]
                )
                return SimulatedProber(IpAddress(entry["source"]), hops)
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"invalid topology entry: {exc}", path=path) from exc
    raise ConfigError(f"topology file has no entry for destination {destination}")


def load_config(path: Optional[str] = None) -> Config:
    """Load and validate the configuration file.

    Without an explicit path, CARBONPATH_CONFIG is consulted; with neither,
    defaults apply (and fail validation, since no providers are selected).
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    config = Config()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        base = os.path.dirname(os.path.abspath(path))

        def _path(value: Optional[str]) -> Optional[str]:
            if value is None:
                return None
            return value if os.path.isabs(value) else os.path.join(base, value)

        geo = doc.get("geo", {})
        carbon = doc.get("carbon", {})
        prober = doc.get("prober", {})
        probe = doc.get("probe", {})
        monitor = doc.get("monitor", {})
        metrics = doc.get("metrics", {})
        config = Config(
            geo_offline_db=_path(geo.get("offline_db")),
            geo_online_endpoint=geo.get("online_endpoint"),
            carbon_trace_dir=_path(carbon.get("trace_dir")),
            carbon_online_endpoint=carbon.get("online_endpoint"),
            carbon_token_env=carbon.get("token_env"),
            zone_map_path=_path(doc.get("zone_map")),
            prober_kind=prober.get("kind", "simulated"),
            topology_file=_path(prober.get("topology_file")),
            probe=ProbeConfig(
                max_ttl=int(probe.get("max_ttl", 30)),
                probes_per_ttl=int(probe.get("probes_per_ttl", 3)),
                per_probe_timeout_ms=float(probe.get("timeout_ms", 1000.0)),
                probe_kind=probe.get("kind", "icmp"),
            ),
            monitor_interval_s=float(monitor.get("interval_s", 3600.0)),
            monitor_duration_s=monitor.get("duration_s"),
            store_dir=_path(doc.get("store_dir")) or "./carbonpath-store",
            metrics_source=metrics.get("source", "system"),
            metrics_script=_path(metrics.get("script")),
        )
    config.validate()
    return config
