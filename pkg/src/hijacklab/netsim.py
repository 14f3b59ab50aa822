"""A deterministic two-host network with an on-path tap.

There is no notion of time beyond an event counter. Frames travel through
per-direction FIFO queues; before a frame is delivered every attached tap
sees it and may drop it or inject new frames of its own. Every send,
injection, delivery, drop and alarm is appended to the transcript.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, TextIO

from .segment import Segment, flag_names

ATTACKER = "attacker"
DEFAULT_MAX_EVENTS = 1_000_000


class SimulationError(Exception):
    pass


class SimulationAborted(SimulationError):
    def __init__(self, message: str, transcript: list[TranscriptEvent]):
        super().__init__(message)
        self.transcript = transcript


class Verdict(enum.Enum):
    PASS = "pass"
    DROP = "drop"


@dataclass(frozen=True)
class Frame:
    segment: Segment
    origin: str
    injected: bool
    direction: tuple[str, str]


class Tap(Protocol):
    def __call__(self, net: SimNet, frame: Frame) -> Verdict | None: ...


Driver = Callable[[Segment], Iterable[Segment]]


@dataclass(frozen=True)
class TranscriptEvent:
    t: int
    kind: str
    actor: str
    segment: Segment | None = None
    note: str = ""

    def to_dict(self) -> dict:
        seg = self.segment
        if seg is None:
            return {"t": self.t, "kind": self.kind, "actor": self.actor, "src": None,
                    "dst": None, "seq": None, "ack": None, "flags": None, "window": None,
                    "ttl": None, "payload_hex": None, "note": self.note}
        return {
            "t": self.t,
            "kind": self.kind,
            "actor": self.actor,
            "src": f"{seg.src_ip}:{seg.src_port}",
            "dst": f"{seg.dst_ip}:{seg.dst_port}",
            "seq": seg.seq,
            "ack": seg.ack,
            "flags": flag_names(seg.flags),
            "window": seg.window,
            "ttl": seg.ttl,
            "payload_hex": seg.payload.hex(),
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class SimNet:
    def __init__(self, max_events: int = DEFAULT_MAX_EVENTS):
        self.max_events = max_events
        self.hosts: dict[str, str] = {}
        self._by_ip: dict[str, str] = {}
        self.queues: dict[tuple[str, str], deque[Frame]] = {}
        self.taps: list[Tap] = []
        self.drop_rules: list[tuple[tuple[str, str] | None, Callable[[Segment], bool], str]] = []
        self.transcript: list[TranscriptEvent] = []
        self.clock = 0

    def add_host(self, name: str, ip: str) -> None:
        if name == ATTACKER:
            raise SimulationError(f"{ATTACKER!r} is reserved for the tap")
        if ip in self._by_ip:
            raise SimulationError(f"address {ip} already taken by {self._by_ip[ip]}")
        self.hosts[name] = ip
        self._by_ip[ip] = name

    def host_for(self, ip: str) -> str | None:
        return self._by_ip.get(ip)

    def attach_tap(self, tap: Tap) -> Tap:
        self.taps.append(tap)
        return tap

    def detach_tap(self, tap: Tap) -> None:
        self.taps.remove(tap)

    def add_drop_rule(self, predicate: Callable[[Segment], bool],
                      direction: tuple[str, str] | None = None, name: str = "drop-rule") -> None:
        self.drop_rules.append((direction, predicate, name))

    def _record(self, kind: str, actor: str, seg: Segment | None = None, note: str = "") -> None:
        self.clock += 1
        self.transcript.append(TranscriptEvent(self.clock, kind, actor, seg, note))

    def _enqueue(self, seg: Segment, origin: str, injected: bool) -> None:
        direction = (self.host_for(seg.src_ip) or origin, self.host_for(seg.dst_ip) or "?")
        self.queues.setdefault(direction, deque()).append(Frame(seg, origin, injected, direction))

    def send(self, host: str, seg: Segment, note: str = "") -> None:
        if host not in self.hosts:
            raise SimulationError(f"unknown host {host!r}")
        if seg.src_ip != self.hosts[host]:
            raise SimulationError(f"{host} ({self.hosts[host]}) cannot send from {seg.src_ip}")
        self._record("sent", host, seg, note)
        self._enqueue(seg, host, injected=False)

    def inject(self, seg: Segment, note: str = "", actor: str = ATTACKER) -> None:
        """Place a frame on the wire without the source-address check."""
        self._record("injected", actor, seg, note)
        self._enqueue(seg, actor, injected=True)

    def alarm(self, actor: str, note: str) -> None:
        self._record("alarm", actor, None, note)

    @property
    def idle(self) -> bool:
        return not any(self.queues.values())

    def _next_frame(self) -> Frame | None:
        # lowest-ordered non-empty direction first; deterministic and FIFO per direction
        for key in sorted(self.queues):
            q = self.queues[key]
            if q:
                return q.popleft()
        return None

    def step(self, drivers: dict[str, Driver]) -> bool:
        frame = self._next_frame()
        if frame is None:
            return False
        seg = frame.segment
        verdict = Verdict.PASS
        for tap in list(self.taps):
            if tap(self, frame) is Verdict.DROP:
                verdict = Verdict.DROP
        dest = self.host_for(seg.dst_ip)
        if verdict is Verdict.DROP:
            self._record("dropped", ATTACKER, seg, "dropped by tap")
            return True
        for direction, predicate, name in self.drop_rules:
            if (direction is None or direction == frame.direction) and predicate(seg):
                self._record("dropped", dest or "?", seg, name)
                return True
        if dest is None:
            self._record("dropped", "?", seg, "no route")
            return True
        self._record("delivered", dest, seg)
        driver = drivers.get(dest)
        if driver is not None:
            for reply in driver(seg):
                self.send(dest, reply)
        return True

    def run_until_idle(self, drivers: dict[str, Driver]) -> list[TranscriptEvent]:
        while self.step(drivers):
            if self.clock > self.max_events:
                raise SimulationAborted(
                    f"aborted after {self.clock} events (limit {self.max_events})",
                    list(self.transcript))
        return self.transcript


def run_until_idle(net: SimNet, drivers: dict[str, Driver]) -> list[TranscriptEvent]:
    return net.run_until_idle(drivers)


def transcript_lines(transcript: Iterable[TranscriptEvent]) -> list[str]:
    return [ev.to_json() for ev in transcript]


def write_transcript(transcript: Iterable[TranscriptEvent], sink: str | Path | TextIO) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            write_transcript(transcript, fh)
        return
    for ev in transcript:
        sink.write(ev.to_json())
        sink.write("\n")
