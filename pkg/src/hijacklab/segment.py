"""Simplified TCP segment and its bit-exact wire encoding.

Layout, big-endian throughout::

    src_ip(4) dst_ip(4) src_port(2) dst_port(2) seq(4) ack(4)
    flags(1) window(2) ttl(1) payload_len(2) payload(payload_len)

The header proper is 24 bytes; with the length field every frame carries
26 bytes of overhead.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from enum import IntFlag

_HEADER = struct.Struct(">4s4sHHIIBHBH")
HEADER_LEN = 24
FRAME_OVERHEAD = _HEADER.size
MAX_PAYLOAD = 0xFFFF

CHECKPOINT_WINDOW = 0xFFFF


class Flags(IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10


ALL_FLAGS = 0x1F


class SegmentError(ValueError):
    pass


def flag_names(flags: int) -> list[str]:
    return [f.name for f in Flags if flags & f]


@dataclass(frozen=True)
class ConnectionId:
    client_ip: str
    client_port: int
    server_ip: str
    server_port: int

    @property
    def client(self) -> tuple[str, int]:
        return (self.client_ip, self.client_port)

    @property
    def server(self) -> tuple[str, int]:
        return (self.server_ip, self.server_port)

    def label(self, from_client: bool = True) -> bytes:
        """Direction-aware rendering, ``src:port>dst:port``."""
        a, b = (self.client, self.server) if from_client else (self.server, self.client)
        return f"{a[0]}:{a[1]}>{b[0]}:{b[1]}".encode("ascii")


@dataclass(frozen=True)
class Segment:
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    seq: int = 0
    ack: int = 0
    flags: int = 0
    window: int = 64240
    ttl: int = 64
    payload: bytes = field(default=b"", repr=False)

    def has(self, flag: Flags) -> bool:
        return (self.flags & flag.value) != 0

    @property
    def src(self) -> tuple[str, int]:
        return (self.src_ip, self.src_port)

    @property
    def dst(self) -> tuple[str, int]:
        return (self.dst_ip, self.dst_port)

    @property
    def is_checkpoint(self) -> bool:
        return self.window == CHECKPOINT_WINDOW and self.flags == Flags.ACK

    def describe(self) -> str:
        names = "|".join(flag_names(self.flags)) or "-"
        return (
            f"{self.src_ip}:{self.src_port} -> {self.dst_ip}:{self.dst_port} "
            f"[{names}] seq={self.seq} ack={self.ack} win={self.window} len={len(self.payload)}"
        )


def _ip_bytes(ip: str) -> bytes:
    try:
        return ipaddress.IPv4Address(ip).packed
    except ValueError as exc:
        raise SegmentError(str(exc)) from None


def serialize_segment(seg: Segment) -> bytes:
    if len(seg.payload) > MAX_PAYLOAD:
        raise SegmentError(f"payload of {len(seg.payload)} bytes exceeds {MAX_PAYLOAD}")
    if seg.flags & ~ALL_FLAGS:
        raise SegmentError(f"undefined flag bits in {seg.flags:#x}")
    try:
        header = _HEADER.pack(
            _ip_bytes(seg.src_ip),
            _ip_bytes(seg.dst_ip),
            seg.src_port,
            seg.dst_port,
            seg.seq,
            seg.ack,
            seg.flags,
            seg.window,
            seg.ttl,
            len(seg.payload),
        )
    except struct.error as exc:
        raise SegmentError(f"field out of range: {exc}") from None
    return header + bytes(seg.payload)


def parse_segment(data: bytes) -> Segment:
    if len(data) < FRAME_OVERHEAD:
        raise SegmentError(f"truncated header: {len(data)} < {FRAME_OVERHEAD} bytes")
    src, dst, sport, dport, seq, ack, flags, window, ttl, plen = _HEADER.unpack_from(data)
    if flags & ~ALL_FLAGS:
        raise SegmentError(f"undefined flag bits in {flags:#x}")
    payload = data[FRAME_OVERHEAD:]
    if len(payload) != plen:
        raise SegmentError(f"payload length field {plen} but {len(payload)} bytes follow")
    return Segment(
        src_ip=str(ipaddress.IPv4Address(src)),
        dst_ip=str(ipaddress.IPv4Address(dst)),
        src_port=sport,
        dst_port=dport,
        seq=seq,
        ack=ack,
        flags=flags,
        window=window,
        ttl=ttl,
        payload=bytes(payload),
    )
