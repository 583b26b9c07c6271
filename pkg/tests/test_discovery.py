from __future__ import annotations

import random

import pytest

from carbonpath.discovery import (
    ProbeConfig,
    ProbeResponse,
    Prober,
    SimulatedProber,
    TopologyHop,
    discover_path,
)
from carbonpath.errors import ProbeError
from carbonpath.model import IpAddress
from helpers import T0

SRC = IpAddress("198.51.100.1")
R1 = IpAddress("192.0.2.1")
R2 = IpAddress("192.0.2.2")
DST = IpAddress("203.0.113.9")


def topo(*entries) -> list[TopologyHop]:
    return [TopologyHop(address=a, rtt_ms=r, drop=d) for a, r, d in entries]


def simple_topology(drop_r2=False):
    return topo((R1, 5.0, False), (R2, 12.0, drop_r2), (DST, 20.0, False))


# ---------------------------------------------------------------------------
# Simulated prober

def test_prober_answers_from_table():
    prober = SimulatedProber(SRC, simple_topology())
    response = prober.probe(DST, 2, ProbeConfig())
    assert response == ProbeResponse(ttl=2, responder=R2, rtt_ms=12.0)


def test_prober_times_out_beyond_table():
    prober = SimulatedProber(SRC, simple_topology())
    assert prober.probe(DST, 5, ProbeConfig()).responder is None


def test_prober_honors_drop_flag():
    prober = SimulatedProber(SRC, topo((R1, 5.0, True), (DST, 9.0, False)))
    assert prober.probe(DST, 1, ProbeConfig()).responder is None


def test_prober_rejects_empty_topology():
    with pytest.raises(ValueError):
        SimulatedProber(SRC, [])


def test_prober_rejects_bad_ttl():
    prober = SimulatedProber(SRC, simple_topology())
    with pytest.raises(ProbeError):
        prober.probe(DST, 0, ProbeConfig())


# ---------------------------------------------------------------------------
# Path discovery

def test_discover_full_path():
    prober = SimulatedProber(SRC, simple_topology())
    path = discover_path(DST, ProbeConfig(), prober, at=T0)
    assert path.reached
    assert [h.address for h in path.hops] == [R1, R2, DST]
    assert [h.rtt_ms for h in path.hops] == [5.0, 12.0, 20.0]
    assert [h.ttl for h in path.hops] == [1, 2, 3]


def test_discover_with_unresponsive_hop():
    prober = SimulatedProber(SRC, simple_topology(drop_r2=True))
    path = discover_path(DST, ProbeConfig(), prober, at=T0)
    assert path.reached
    assert [h.address for h in path.hops] == [R1, None, DST]


def test_discover_self_is_zero_hops():
    prober = SimulatedProber(SRC, simple_topology())
    path = discover_path(SRC, ProbeConfig(), prober, at=T0)
    assert path.reached
    assert path.hops == ()
    assert path.source_host == path.destination_host == SRC


def test_discover_unreached_runs_to_max_ttl():
    prober = SimulatedProber(SRC, topo((R1, 5.0, False), (DST, 9.0, True)))
    path = discover_path(DST, ProbeConfig(max_ttl=6), prober, at=T0)
    assert not path.reached
    assert len(path.hops) == 6
    assert [h.address for h in path.hops] == [R1, None, None, None, None, None]


class ScriptedProber(Prober):
    """Returns a canned response sequence per TTL, in probe order."""

    def __init__(self, script: dict[int, list[ProbeResponse]]):
        self._script = {ttl: list(responses) for ttl, responses in script.items()}

    @property
    def source_address(self) -> IpAddress:
        return SRC

    def probe(self, destination, ttl, config):
        responses = self._script.get(ttl)
        if not responses:
            return ProbeResponse(ttl=ttl, responder=None)
        return responses.pop(0)


def test_majority_vote_picks_repeat_responder():
    script = {
        1: [
            ProbeResponse(1, R1, 9.0),
            ProbeResponse(1, R2, 7.0),
            ProbeResponse(1, R2, 8.0),
        ],
        2: [ProbeResponse(2, DST, 20.0)] * 3,
    }
    path = discover_path(DST, ProbeConfig(probes_per_ttl=3), ScriptedProber(script), at=T0)
    assert path.hops[0].address == R2
    # rtt is the minimum across the round's responsive probes
    assert path.hops[0].rtt_ms == 7.0


def test_majority_tie_breaks_to_first_response():
    script = {
        1: [
            ProbeResponse(1, R2, 6.0),
            ProbeResponse(1, R1, 5.0),
            ProbeResponse(1, None, None),
        ],
        2: [ProbeResponse(2, DST, 20.0)] * 3,
    }
    path = discover_path(DST, ProbeConfig(probes_per_ttl=3), ScriptedProber(script), at=T0)
    assert path.hops[0].address == R2
    assert path.hops[0].rtt_ms == 5.0


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(max_ttl=0)
    with pytest.raises(ValueError):
        ProbeConfig(probes_per_ttl=0)
    with pytest.raises(ValueError):
        ProbeConfig(per_probe_timeout_ms=0)
    with pytest.raises(ValueError):
        ProbeConfig(probe_kind="tcp")


# ---------------------------------------------------------------------------
# Properties over random topologies

def random_topology(rng: random.Random, max_len=30):
    length = rng.randint(1, max_len)
    addresses = rng.sample(range(1, 250), length)
    entries = [
        TopologyHop(
            address=IpAddress(f"203.0.113.{octet}"),
            rtt_ms=round(rng.uniform(0.5, 80.0), 2),
            drop=rng.random() < 0.25,
        )
        for octet in addresses
    ]
    return entries


def test_discovery_matches_topology_on_random_worlds():
    rng = random.Random(20240414)
    for _ in range(60):
        topology = random_topology(rng)
        prober = SimulatedProber(SRC, topology)
        config = ProbeConfig(max_ttl=len(topology))
        path = discover_path(prober.destination_address, config, prober, at=T0)
        expected = [None if e.drop else e.address for e in topology]
        assert [h.address for h in path.hops] == expected
        assert [h.ttl for h in path.hops] == list(range(1, len(topology) + 1))
        assert path.reached == (not topology[-1].drop)


def test_discovery_is_deterministic():
    rng = random.Random(7)
    topology = random_topology(rng)
    prober = SimulatedProber(SRC, topology)
    config = ProbeConfig(max_ttl=len(topology))
    first = discover_path(prober.destination_address, config, prober, at=T0)
    second = discover_path(prober.destination_address, config, prober, at=T0)
    assert first == second
