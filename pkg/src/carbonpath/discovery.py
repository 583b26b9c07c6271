"""TTL-limited path discovery behind a prober abstraction.

The Prober interface separates packet I/O from path logic: the simulated
prober answers from a hop table and makes every test deterministic, while
the raw ICMP prober (rawprobe module) needs elevated privileges and is
constructed only on request.
"""

from __future__ import annotations

import abc
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Sequence

from .clock import UTC
from .errors import ProbeError
from .model import Hop, IpAddress, NetworkPath


@dataclass(frozen=True)
class ProbeConfig:
    """Knobs for one discovery run. Defaults follow common traceroute practice."""

    max_ttl: int = 30
    probes_per_ttl: int = 3
    per_probe_timeout_ms: float = 1000.0
    probe_kind: str = "icmp"  # icmp | udp

    def __post_init__(self):
        if self.max_ttl < 1:
            raise ValueError("max_ttl must be >= 1")
        if self.probes_per_ttl < 1:
            raise ValueError("probes_per_ttl must be >= 1")
        if self.per_probe_timeout_ms <= 0:
            raise ValueError("per_probe_timeout_ms must be positive")
        if self.probe_kind not in ("icmp", "udp"):
            raise ValueError(f"unknown probe kind {self.probe_kind!r}")


@dataclass(frozen=True)
class ProbeResponse:
    """Answer to a single TTL-limited probe; responder None means timeout."""

    ttl: int
    responder: Optional[IpAddress]
    rtt_ms: Optional[float] = None

    def __post_init__(self):
        if (self.responder is None) != (self.rtt_ms is None):
            raise ValueError("rtt_ms must be present exactly when a responder is")


class Prober(abc.ABC):
    """Issues one TTL-limited probe toward a destination."""

    @property
    @abc.abstractmethod
    def source_address(self) -> IpAddress:
        """Address of the end system the probes leave from."""

    @abc.abstractmethod
    def probe(self, destination: IpAddress, ttl: int, config: ProbeConfig) -> ProbeResponse:
        """Send one probe with the given TTL and wait for an answer."""


@dataclass(frozen=True)
class TopologyHop:
    """One entry of a simulated hop table."""

    address: IpAddress
    rtt_ms: float
    drop: bool = False


class SimulatedProber(Prober):
    """Deterministic prober answering TTL-k probes from a hop table.

    Entry k-1 answers probes at TTL k unless its drop flag is set; TTLs
    beyond the table time out. The last entry is the destination.
    """

    def __init__(self, source: IpAddress, topology: Sequence[TopologyHop]):
        if not topology:
            raise ValueError("topology must be nonempty")
        self._source = source
        self._topology = tuple(topology)

    @property
    def source_address(self) -> IpAddress:
        return self._source

    @property
    def topology(self) -> tuple[TopologyHop, ...]:
        return self._topology

    @property
    def destination_address(self) -> IpAddress:
        return self._topology[-1].address

    def probe(self, destination: IpAddress, ttl: int, config: ProbeConfig) -> ProbeResponse:
        if ttl < 1:
            raise ProbeError(f"probe ttl must be >= 1, got {ttl}")
        if ttl > len(self._topology):
            return ProbeResponse(ttl=ttl, responder=None)
        entry = self._topology[ttl - 1]
        if entry.drop:
            return ProbeResponse(ttl=ttl, responder=None)
        return ProbeResponse(ttl=ttl, responder=entry.address, rtt_ms=entry.rtt_ms)


def _elect_responder(responses: Sequence[ProbeResponse]) -> tuple[Optional[IpAddress], Optional[float]]:
    """Majority-vote the responder for one TTL round; ties go to the first seen.

    The rtt is the minimum across the round's responsive probes.
    """
    answered = [r for r in responses if r.responder is not None]
    if not answered:
        return None, None
    votes = Counter(r.responder for r in answered)
    top = max(votes.values())
    winner = next(r.responder for r in answered if votes[r.responder] == top)
    rtt = min(r.rtt_ms for r in answered)  # type: ignore[type-var]
    return winner, rtt


def discover_path(
    destination: IpAddress,
    config: ProbeConfig,
    prober: Prober,
    at: Optional[datetime] = None,
) -> NetworkPath:
    """Walk TTLs 1..max_ttl until the destination answers.

    Each TTL is probed config.probes_per_ttl times; the responder is chosen
    by majority vote (per-packet load balancing can rotate responders), and
    a TTL whose probes all time out becomes an unresponsive hop. Probing the
    source host itself yields a path with no intermediate hops.

    A destination that never answers yields reached=False rather than an
    error; partial paths are normal measurement output.
    """
    discovered_at = at if at is not None else datetime.now(UTC)
    if destination == prober.source_address:
        return NetworkPath(
            source_host=prober.source_address,
            destination_host=destination,
            hops=(),
            discovered_at=discovered_at,
            reached=True,
        )

    hops: list[Hop] = []
    reached = False
    for ttl in range(1, config.max_ttl + 1):
        responses = [prober.probe(destination, ttl, config) for _ in range(config.probes_per_ttl)]
        responder, rtt = _elect_responder(responses)
        hops.append(Hop(ttl=ttl, address=responder, rtt_ms=rtt))
        if responder == destination:
            reached = True
            break
    return NetworkPath(
        source_host=prober.source_address,
        destination_host=destination,
        hops=tuple(hops),
        discovered_at=discovered_at,
        reached=reached,
    )
