from __future__ import annotations

import io
import json

import pytest
from hypothesis import given, strategies as st

from carbonpath.clock import SimulatedClock
from carbonpath.errors import SampleError, SinkError
from carbonpath.metrics import (
    HostMetrics,
    MetricsSnapshot,
    NetworkMetrics,
    SyntheticSource,
    TransferMetrics,
    emit,
    sample,
    snapshot_from_json,
    snapshot_to_json,
)
from helpers import T0


def host(**overrides) -> HostMetrics:
    values = dict(
        core_count=8,
        free_memory=8 << 30,
        max_memory=16 << 30,
        memory=6 << 30,
        cpu_freq_min=800.0,
        cpu_freq_max=4200.0,
        cpu_freq_cur=2600.0,
        cpu_arch="x86_64",
        cpu_utilization=0.35,
    )
    values.update(overrides)
    return HostMetrics(**values)


def net(**overrides) -> NetworkMetrics:
    values = dict(
        drop_in=0,
        drop_out=1,
        error_in=0,
        error_out=0,
        latency_src_ms=2.0,
        latency_dst_ms=11.0,
        rtt_src_ms=4.5,
        rtt_dst_ms=23.0,
        nic_mtu=1500,
        nic_speed=10_000_000_000,
        interface="eth0",
        packets_sent=1000,
        packets_received=2000,
        read_thrpt=1.2e6,
        write_thrpt=3.4e6,
    )
    values.update(overrides)
    return NetworkMetrics(**values)


def transfer(**overrides) -> TransferMetrics:
    values = dict(
        job_uuid="8e7f2c1a",
        job_size=10_000_000,
        transfer_node_id="ftn-1",
        buffer_size=1 << 20,
        parallelism=4,
        concurrency=2,
        pipelining=1,
        bytes_sent=5_000_000,
        bytes_received=4_900_000,
    )
    values.update(overrides)
    return TransferMetrics(**values)


# ---------------------------------------------------------------------------
# Validation

def test_invariant_violations_rejected():
    with pytest.raises(ValueError):
        host(free_memory=32 << 30)  # free > max
    with pytest.raises(ValueError):
        host(cpu_utilization=1.5)
    with pytest.raises(ValueError):
        host(cpu_freq_cur=5000.0)  # above max
    with pytest.raises(ValueError):
        net(rtt_src_ms=1.0)  # rtt below latency
    with pytest.raises(ValueError):
        net(packets_sent=-1)
    with pytest.raises(ValueError):
        transfer(bytes_sent=20_000_000)  # beyond job size
    with pytest.raises(ValueError):
        transfer(parallelism=0)


def test_partial_frequencies_allowed():
    host(cpu_freq_min=None, cpu_freq_max=None, cpu_freq_cur=None)
    host(cpu_freq_min=None, cpu_freq_cur=9999.0)  # no envelope to check against


# ---------------------------------------------------------------------------
# Sampling

def test_scripted_source_returns_exact_values():
    source = SyntheticSource([(host(), net(), transfer())])
    snapshot = sample(source, SimulatedClock(T0))
    assert snapshot.ts == T0
    assert snapshot.host == host()
    assert snapshot.net == net()
    assert snapshot.transfer == transfer()


def test_counter_regression_is_sample_error():
    source = SyntheticSource(
        [
            (host(), net(packets_sent=10), None),
            (host(), net(packets_sent=8), None),
        ]
    )
    clock = SimulatedClock(T0)
    sample(source, clock)
    with pytest.raises(SampleError):
        sample(source, clock)


def test_counters_may_stay_flat_or_grow():
    source = SyntheticSource(
        [
            (host(), net(packets_sent=10), None),
            (host(), net(packets_sent=10), None),
            (host(), net(packets_sent=11), None),
        ]
    )
    clock = SimulatedClock(T0)
    for _ in range(3):
        sample(source, clock)


def test_transfer_absent_outside_jobs():
    source = SyntheticSource([(host(), net(), None)])
    snapshot = sample(source, SimulatedClock(T0))
    assert snapshot.transfer is None
    assert "transfer" not in snapshot_to_json(snapshot)


def test_source_exceptions_become_sample_errors():
    class Broken(SyntheticSource):
        def read(self):
            raise RuntimeError("no such file")

    with pytest.raises(SampleError):
        sample(Broken([(host(), net(), None)]), SimulatedClock(T0))


# ---------------------------------------------------------------------------
# Serialization

def test_round_trip_with_transfer():
    snapshot = MetricsSnapshot(ts=T0, host=host(), net=net(), transfer=transfer())
    assert snapshot_from_json(snapshot_to_json(snapshot)) == snapshot


def test_round_trip_through_stream():
    stream = io.StringIO()
    snapshot = MetricsSnapshot(ts=T0, host=host(), net=net())
    emit(snapshot, stream)
    line = stream.getvalue().strip()
    assert snapshot_from_json(json.loads(line)) == snapshot


def test_hundred_emits_are_independent_lines():
    stream = io.StringIO()
    source = SyntheticSource([(host(), net(), None)])
    clock = SimulatedClock(T0)
    for _ in range(100):
        emit(sample(source, clock), stream)
        clock.advance(1.0)
    lines = stream.getvalue().splitlines()
    assert len(lines) == 100
    parsed = [snapshot_from_json(json.loads(line)) for line in lines]
    assert len({p.ts for p in parsed}) == 100


def test_emit_failure_is_sink_error():
    class Closed(io.StringIO):
        def write(self, *_):
            raise OSError("pipe closed")

    with pytest.raises(SinkError):
        emit(MetricsSnapshot(ts=T0, host=host(), net=net()), Closed())


def test_json_field_names_match_schema():
    record = snapshot_to_json(MetricsSnapshot(ts=T0, host=host(), net=net(), transfer=transfer()))
    assert set(record["host"]) == {
        "core_count", "free_memory", "max_memory", "memory",
        "cpu_freq_min", "cpu_freq_max", "cpu_freq_cur", "cpu_arch", "cpu_util",
    }
    assert set(record["net"]) == {
        "drop_in", "drop_out", "error_in", "error_out",
        "latency_src_ms", "latency_dst_ms", "rtt_src_ms", "rtt_dst_ms",
        "nic_mtu", "nic_speed", "interface", "packets_sent", "packets_received",
        "read_thrpt", "write_thrpt",
    }
    assert set(record["transfer"]) == {
        "job_uuid", "job_size", "node_id", "buffer_size",
        "parallelism", "concurrency", "pipelining", "bytes_sent", "bytes_received",
    }


# hypothesis strategies for arbitrary valid snapshots

_sizes = st.integers(0, 1 << 40)
_counters = st.integers(0, 1 << 32)
_floats = st.floats(0, 1e9, allow_nan=False, allow_infinity=False)


@st.composite
def snapshots(draw):
    max_memory = draw(st.integers(1, 1 << 40))
    freq_known = draw(st.booleans())
    f_min = draw(st.floats(100, 2000, allow_nan=False)) if freq_known else None
    f_max = draw(st.floats(2000, 6000, allow_nan=False)) if freq_known else None
    f_cur = draw(st.floats(f_min, f_max, allow_nan=False)) if freq_known else None
    host_m = HostMetrics(
        core_count=draw(st.integers(1, 512)),
        free_memory=draw(st.integers(0, max_memory)),
        max_memory=max_memory,
        memory=draw(_sizes),
        cpu_freq_min=f_min,
        cpu_freq_max=f_max,
        cpu_freq_cur=f_cur,
        cpu_arch=draw(st.sampled_from(["x86_64", "aarch64", "arm64"])),
        cpu_utilization=draw(st.floats(0, 1, allow_nan=False)),
    )
    latency = draw(st.one_of(st.none(), st.floats(0, 500, allow_nan=False)))
    rtt = None if latency is None else latency + draw(st.floats(0, 500, allow_nan=False))
    net_m = NetworkMetrics(
        drop_in=draw(_counters),
        drop_out=draw(_counters),
        error_in=draw(_counters),
        error_out=draw(_counters),
        latency_src_ms=latency,
        latency_dst_ms=latency,
        rtt_src_ms=rtt,
        rtt_dst_ms=rtt,
        nic_mtu=draw(st.integers(0, 9000)),
        nic_speed=draw(st.one_of(st.none(), st.integers(0, 10**12))),
        interface=draw(st.sampled_from(["eth0", "en0", "ib0"])),
        packets_sent=draw(_counters),
        packets_received=draw(_counters),
        read_thrpt=draw(_floats),
        write_thrpt=draw(_floats),
    )
    transfer_m = None
    if draw(st.booleans()):
        job_size = draw(st.integers(0, 1 << 40))
        transfer_m = TransferMetrics(
            job_uuid=draw(st.uuids()).hex,
            job_size=job_size,
            transfer_node_id=draw(st.sampled_from(["ftn-a", "ftn-b"])),
            buffer_size=draw(st.integers(0, 1 << 30)),
            parallelism=draw(st.integers(1, 64)),
            concurrency=draw(st.integers(1, 64)),
            pipelining=draw(st.integers(1, 64)),
            bytes_sent=draw(st.integers(0, job_size)),
            bytes_received=draw(st.integers(0, 1 << 40)),
        )
    ts = T0.fromtimestamp(draw(st.integers(0, 2**31 - 1)), tz=T0.tzinfo)
    return MetricsSnapshot(ts=ts, host=host_m, net=net_m, transfer=transfer_m)


@given(snapshots())
def test_serialization_round_trip_is_lossless(snapshot):
    encoded = json.dumps(snapshot_to_json(snapshot))
    assert snapshot_from_json(json.loads(encoded)) == snapshot


def test_psutil_source_if_available():
    psutil = pytest.importorskip("psutil")
    from carbonpath.metrics import PsutilSource

    source = PsutilSource()
    clock = SimulatedClock(T0)
    first = sample(source, clock)
    second = sample(source, clock)  # counters must not regress
    assert first.host.core_count >= 1
    assert first.net.interface
    assert second.net.packets_sent >= first.net.packets_sent
