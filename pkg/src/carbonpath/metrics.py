"""End-system metric schema and pluggable samplers.

The schema (host, network, transfer groups) is the portable core; sources
are pluggable because fine-grained monitoring is hardware-dependent. The
synthetic source replays scripted values for tests, the psutil-backed
source reads the local OS when available. Power/energy counters are
deliberately absent from schema v1.
"""

from __future__ import annotations

import abc
import json
import time
from dataclasses import dataclass
from datetime import datetime
from typing import IO, Optional

from .clock import Clock, SystemClock, format_utc, parse_utc
from .errors import SampleError, SinkError

_COUNTER_FIELDS = (
    "drop_in", "drop_out", "error_in", "error_out", "packets_sent", "packets_received",
)


@dataclass(frozen=True)
class HostMetrics:
    core_count: int
    free_memory: int
    max_memory: int
    memory: int
    cpu_freq_min: Optional[float]
    cpu_freq_max: Optional[float]
    cpu_freq_cur: Optional[float]
    cpu_arch: str
    cpu_utilization: float

    def __post_init__(self):
        if self.core_count < 1:
            raise ValueError("core_count must be >= 1")
        if min(self.free_memory, self.max_memory, self.memory) < 0:
            raise ValueError("memory figures must be nonnegative")
        if self.free_memory > self.max_memory:
            raise ValueError("free_memory cannot exceed max_memory")
        if None not in (self.cpu_freq_min, self.cpu_freq_max, self.cpu_freq_cur):
            if not (self.cpu_freq_min <= self.cpu_freq_cur <= self.cpu_freq_max):
                raise ValueError("cpu frequency must satisfy min <= current <= max")
        if not 0.0 <= self.cpu_utilization <= 1.0:
            raise ValueError("cpu_utilization must be within [0, 1]")


@dataclass(frozen=True)
class NetworkMetrics:
    drop_in: int
    drop_out: int
    error_in: int
    error_out: int
    latency_src_ms: Optional[float]
    latency_dst_ms: Optional[float]
    rtt_src_ms: Optional[float]
    rtt_dst_ms: Optional[float]
    nic_mtu: int
    nic_speed: Optional[int]
    interface: str
    packets_sent: int
    packets_received: int
    read_thrpt: float
    write_thrpt: float

    def __post_init__(self):
        for name in _COUNTER_FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for latency, rtt in (
            (self.latency_src_ms, self.rtt_src_ms),
            (self.latency_dst_ms, self.rtt_dst_ms),
        ):
            if latency is not None and latency < 0:
                raise ValueError("latency must be nonnegative")
            if rtt is not None and latency is not None and rtt < latency:
                raise ValueError("rtt cannot be below latency")
        if self.nic_mtu < 0:
            raise ValueError("nic_mtu must be nonnegative")
        if min(self.read_thrpt, self.write_thrpt) < 0:
            raise ValueError("throughput must be nonnegative")


@dataclass(frozen=True)
class TransferMetrics:
    job_uuid: str
    job_size: int
    transfer_node_id: str
    buffer_size: int
    parallelism: int
    concurrency: int
    pipelining: int
    bytes_sent: int
    bytes_received: int

    def __post_init__(self):
        if self.job_size < 0 or self.buffer_size < 0:
            raise ValueError("sizes must be nonnegative")
        if min(self.parallelism, self.concurrency, self.pipelining) < 1:
            raise ValueError("parallelism, concurrency, pipelining must be >= 1")
        if self.bytes_sent < 0 or self.bytes_received < 0:
            raise ValueError("byte counters must be nonnegative")
        if self.bytes_sent > self.job_size:
            raise ValueError("bytes_sent cannot exceed job_size")


@dataclass(frozen=True)
class MetricsSnapshot:
    """One timestamped reading; transfer is present only during an active job."""

    ts: datetime
    host: HostMetrics
    net: NetworkMetrics
    transfer: Optional[TransferMetrics] = None


class MetricsSource(abc.ABC):
    """Produces raw metric tuples; sample() adds validation and stamping."""

    def __init__(self):
        self._last_counters: Optional[dict[str, int]] = None

    @abc.abstractmethod
    def read(self) -> tuple[HostMetrics, NetworkMetrics, Optional[TransferMetrics]]:
        """Read one raw sample."""


def sample(source: MetricsSource, clock: Optional[Clock] = None) -> MetricsSnapshot:
    """Take one validated snapshot from a source.

    Network counters must never decrease across successive samples of one
    source stream; a regression means the source is lying and surfaces as
    SampleError rather than polluting downstream accounting.
    """
    clock = clock if clock is not None else SystemClock()
    try:
        host, net, transfer = source.read()
    except SampleError:
        raise
    except Exception as exc:
        raise SampleError(f"source read failed: {exc}") from exc
    counters = {name: getattr(net, name) for name in _COUNTER_FIELDS}
    last = source._last_counters
    if last is not None:
        for name, value in counters.items():
            if value < last[name]:
                raise SampleError(
                    f"counter {name} regressed from {last[name]} to {value}"
                )
    source._last_counters = counters
    return MetricsSnapshot(ts=clock.now(), host=host, net=net, transfer=transfer)


class SyntheticSource(MetricsSource):
    """Replays a scripted sequence of samples; the last entry repeats forever."""

    def __init__(self, script: list[tuple[HostMetrics, NetworkMetrics, Optional[TransferMetrics]]]):
        super().__init__()
        if not script:
            raise ValueError("script must be nonempty")
        self._script = list(script)
        self._index = 0

    def read(self):
        entry = self._script[min(self._index, len(self._script) - 1)]
        self._index += 1
        return entry


class PsutilSource(MetricsSource):
    """OS-backed source reading host and NIC state via psutil.

    Latency/rtt are not measured here (they come from active probing) and
    stay unset; throughput derives from byte-counter deltas between reads.
    """

    def __init__(self, interface: Optional[str] = None):
        super().__init__()
        try:
            import psutil
        except ImportError as exc:
            raise SampleError("psutil is not installed; use the synthetic source") from exc
        self._psutil = psutil
        self._interface = interface
        self._last_read: Optional[tuple[float, int, int]] = None

    def _pick_interface(self) -> str:
        if self._interface is not None:
            return self._interface
        stats = self._psutil.net_if_stats()
        for name in sorted(stats):
            if name != "lo" and stats[name].isup:
                return name
        return "lo"

    def read(self):
        import platform

        ps = self._psutil
        vm = ps.virtual_memory()
        freq = None
        try:
            freq = ps.cpu_freq()
        except Exception:
            pass
        host = HostMetrics(
            core_count=ps.cpu_count() or 1,
            free_memory=vm.available,
            max_memory=vm.total,
            memory=vm.used,
            cpu_freq_min=freq.min if freq and freq.min else None,
            cpu_freq_max=freq.max if freq and freq.max else None,
            cpu_freq_cur=freq.current if freq and freq.current else None,
            cpu_arch=platform.machine(),
            cpu_utilization=min(1.0, max(0.0, ps.cpu_percent(interval=None) / 100.0)),
        )
        iface = self._pick_interface()
        counters = ps.net_io_counters(pernic=True).get(iface)
        stats = ps.net_if_stats().get(iface)
        if counters is None or stats is None:
            raise SampleError(f"interface {iface!r} has no counters")
        now = time.monotonic()
        read_thrpt = write_thrpt = 0.0
        if self._last_read is not None:
            then, rx, tx = self._last_read
            elapsed = now - then
            if elapsed > 0:
                read_thrpt = max(0.0, (counters.bytes_recv - rx) / elapsed)
                write_thrpt = max(0.0, (counters.bytes_sent - tx) / elapsed)
        self._last_read = (now, counters.bytes_recv, counters.bytes_sent)
        net = NetworkMetrics(
            drop_in=counters.dropin,
            drop_out=counters.dropout,
            error_in=counters.errin,
            error_out=counters.errout,
            latency_src_ms=None,
            latency_dst_ms=None,
            rtt_src_ms=None,
            rtt_dst_ms=None,
            nic_mtu=stats.mtu,
            nic_speed=stats.speed * 1_000_000 if stats.speed else None,
            interface=iface,
            packets_sent=counters.packets_sent,
            packets_received=counters.packets_recv,
            read_thrpt=read_thrpt,
            write_thrpt=write_thrpt,
        )
        return host, net, None


# ---------------------------------------------------------------------------
# JSON-lines serialization

def snapshot_to_json(snapshot: MetricsSnapshot) -> dict:
    record = {
        "ts": format_utc(snapshot.ts),
        "host": {
            "core_count": snapshot.host.core_count,
            "free_memory": snapshot.host.free_memory,
            "max_memory": snapshot.host.max_memory,
            "memory": snapshot.host.memory,
            "cpu_freq_min": snapshot.host.cpu_freq_min,
            "cpu_freq_max": snapshot.host.cpu_freq_max,
            "cpu_freq_cur": snapshot.host.cpu_freq_cur,
            "cpu_arch": snapshot.host.cpu_arch,
            "cpu_util": snapshot.host.cpu_utilization,
        },
        "net": {
            "drop_in": snapshot.net.drop_in,
            "drop_out": snapshot.net.drop_out,
            "error_in": snapshot.net.error_in,
            "error_out": snapshot.net.error_out,
            "latency_src_ms": snapshot.net.latency_src_ms,
            "latency_dst_ms": snapshot.net.latency_dst_ms,
            "rtt_src_ms": snapshot.net.rtt_src_ms,
            "rtt_dst_ms": snapshot.net.rtt_dst_ms,
            "nic_mtu": snapshot.net.nic_mtu,
            "nic_speed": snapshot.net.nic_speed,
            "interface": snapshot.net.interface,
            "packets_sent": snapshot.net.packets_sent,
            "packets_received": snapshot.net.packets_received,
            "read_thrpt": snapshot.net.read_thrpt,
            "write_thrpt": snapshot.net.write_thrpt,
        },
    }
    if snapshot.transfer is not None:
        record["transfer"] = {
            "job_uuid": snapshot.transfer.job_uuid,
            "job_size": snapshot.transfer.job_size,
            "node_id": snapshot.transfer.transfer_node_id,
            "buffer_size": snapshot.transfer.buffer_size,
            "parallelism": snapshot.transfer.parallelism,
            "concurrency": snapshot.transfer.concurrency,
            "pipelining": snapshot.transfer.pipelining,
            "bytes_sent": snapshot.transfer.bytes_sent,
            "bytes_received": snapshot.transfer.bytes_received,
        }
    return record


def snapshot_from_json(record: dict) -> MetricsSnapshot:
    host = record["host"]
    net = record["net"]
    transfer = None
    if "transfer" in record:
        t = record["transfer"]
        transfer = TransferMetrics(
            job_uuid=t["job_uuid"],
            job_size=t["job_size"],
            transfer_node_id=t["node_id"],
            buffer_size=t["buffer_size"],
            parallelism=t["parallelism"],
            concurrency=t["concurrency"],
            pipelining=t["pipelining"],
            bytes_sent=t["bytes_sent"],
            bytes_received=t["bytes_received"],
        )
    return MetricsSnapshot(
        ts=parse_utc(record["ts"]),
        host=HostMetrics(
            core_count=host["core_count"],
            free_memory=host["free_memory"],
            max_memory=host["max_memory"],
            memory=host["memory"],
            cpu_freq_min=host["cpu_freq_min"],
            cpu_freq_max=host["cpu_freq_max"],
            cpu_freq_cur=host["cpu_freq_cur"],
            cpu_arch=host["cpu_arch"],
            cpu_utilization=host["cpu_util"],
        ),
        net=NetworkMetrics(
            drop_in=net["drop_in"],
            drop_out=net["drop_out"],
            error_in=net["error_in"],
            error_out=net["error_out"],
            latency_src_ms=net["latency_src_ms"],
            latency_dst_ms=net["latency_dst_ms"],
            rtt_src_ms=net["rtt_src_ms"],
            rtt_dst_ms=net["rtt_dst_ms"],
            nic_mtu=net["nic_mtu"],
            nic_speed=net["nic_speed"],
            interface=net["interface"],
            packets_sent=net["packets_sent"],
            packets_received=net["packets_received"],
            read_thrpt=net["read_thrpt"],
            write_thrpt=net["write_thrpt"],
        ),
        transfer=transfer,
    )


def emit(snapshot: MetricsSnapshot, stream: IO[str]) -> dict:
    """Append one snapshot to a JSON-lines stream; returns the record written."""
    record = snapshot_to_json(snapshot)
    try:
        stream.write(json.dumps(record, separators=(",", ":")) + "\n")
        stream.flush()
    except OSError as exc:
        raise SinkError(f"metrics sink write failed: {exc}") from exc
    return record
