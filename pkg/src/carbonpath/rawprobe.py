"""Raw-socket ICMP prober for live path discovery.

Requires privileges for raw sockets (root or CAP_NET_RAW) and a real
network, so nothing in the test suite touches it; CLI configs opt in with
prober kind "icmp". UDP high-port probing is not implemented yet; the
probe_kind knob is honored for ICMP only.
"""

from __future__ import annotations

import os
import select
import socket
import struct
import time

from .discovery import Prober, ProbeConfig, ProbeResponse
from .errors import ProbeError
from .model import IpAddress

_ICMP_ECHO_REQUEST = 8
_ICMP_ECHO_REPLY = 0
_ICMP_TTL_EXCEEDED = 11


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    total = (total >> 16) + (total & 0xFFFF)
    total += total >> 16
    return ~total & 0xFFFF


def _local_address(destination: str) -> str:
    # UDP connect does not send packets; it just resolves the egress address.
    probe = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        probe.connect((destination, 33434))
        return probe.getsockname()[0]
    finally:
        probe.close()


class IcmpProber(Prober):
    """Sends ICMP echo requests with a per-probe TTL and reads the answer."""

    def __init__(self, destination_hint: str):
        try:
            self._source = IpAddress(_local_address(destination_hint))
        except OSError as exc:
            raise ProbeError(f"cannot determine local address: {exc}") from exc
        self._ident = os.getpid() & 0xFFFF
        self._seq = 0

    @property
    def source_address(self) -> IpAddress:
        return self._source

    def probe(self, destination: IpAddress, ttl: int, config: ProbeConfig) -> ProbeResponse:
        self._seq = (self._seq + 1) & 0xFFFF
        try:
            sock = socket.socket(socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_ICMP)
        except PermissionError as exc:
            raise ProbeError("raw ICMP sockets need elevated privileges") from exc
        try:
            sock.setsockopt(socket.SOL_IP, socket.IP_TTL, ttl)
            header = struct.pack("!BBHHH", _ICMP_ECHO_REQUEST, 0, 0, self._ident, self._seq)
            payload = struct.pack("!d", time.time())
            packet = struct.pack(
                "!BBHHH", _ICMP_ECHO_REQUEST, 0, _checksum(header + payload), self._ident, self._seq
            ) + payload
            sent_at = time.monotonic()
            sock.sendto(packet, (destination.text, 0))
            deadline = sent_at + config.per_probe_timeout_ms / 1000.0
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return ProbeResponse(ttl=ttl, responder=None)
                ready, _, _ = select.select([sock], [], [], remaining)
                if not ready:
                    return ProbeResponse(ttl=ttl, responder=None)
                data, addr = sock.recvfrom(2048)
                rtt_ms = (time.monotonic() - sent_at) * 1000.0
                icmp_type = data[20] if len(data) > 20 else None
                if icmp_type in (_ICMP_ECHO_REPLY, _ICMP_TTL_EXCEEDED):
                    return ProbeResponse(ttl=ttl, responder=IpAddress(addr[0]), rtt_ms=rtt_ms)
                # unrelated ICMP traffic; keep waiting until the deadline
        except OSError as exc:
            raise ProbeError(f"probe I/O failed: {exc}") from exc
        finally:
            sock.close()
