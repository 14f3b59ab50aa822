"""On-path adversary: sniff, forge, knock the client off, keep talking.

The attacker sits on a tap and only ever works from the bytes it has seen
on the wire. It never reads endpoint state or key material; it can only
see frames and put new ones on the wire.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .crypto import RsaKeyPair, demo_keypair
from .hosts import ClientHost, ServerHost
from .netsim import Frame, SimNet, SimulationError, Verdict, write_transcript
from .protocol import SEQ_MOD, Mode, ReceiptKind, SecureConfig, State
from .segment import CHECKPOINT_WINDOW, ConnectionId, Flags, Segment, parse_segment, serialize_segment

LAB_CLIENT = ("192.168.0.104", 59999)
LAB_SERVER = ("192.168.0.105", 49999)
DEFAULT_COMMAND = b"sudo passwd root"
FORGED_TTL = 128
FORGED_WINDOW = 128

HONEST_COMMANDS = (b"whoami", b"ls -l", b"cat notes.txt", b"uptime", b"df -h")


class IntelUnavailable(Exception):
    pass


@dataclass(frozen=True)
class SessionIntel:
    conn: ConnectionId
    next_seq: int
    expected_ack: int
    ttl: int
    last_window: int
    secured: bool = False
    checkpoint_interval: int | None = None
    since_checkpoint: int = 0
    last_checkpoint: bytes | None = None


class IntelTracker:
    """Incremental form of :func:`extract_session_intel`."""

    def __init__(self, client: tuple[str, int] | None = None):
        self.client = client
        self.server: tuple[str, int] | None = None
        self.secured = False
        self.last: Segment | None = None
        self.last_window: int | None = None
        self.interval: int | None = None
        self.since = 0
        self.last_tag: bytes | None = None

    def feed(self, seg: Segment) -> None:
        if self.client is None:
            is_synack = seg.has(Flags.SYN) and seg.has(Flags.ACK)
            self.client = seg.dst if is_synack else seg.src
        if seg.src != self.client or seg.has(Flags.RST):
            return
        if self.server is None:
            self.server = seg.dst
        elif seg.dst != self.server:
            return
        if seg.has(Flags.SYN):
            self.secured = self.secured or bool(seg.payload)
            return
        self.last = seg
        if seg.is_checkpoint:
            self.secured = True
            self.interval = self.since
            self.since = 0
            self.last_tag = seg.payload
            return
        self.last_window = seg.window
        if seg.has(Flags.PSH):
            self.since += 1

    def intel(self) -> SessionIntel:
        last = self.last
        if last is None:
            raise IntelUnavailable("no client-to-server data or ACK segment observed")
        consumed = len(last.payload) if last.has(Flags.PSH) else 0
        return SessionIntel(
            conn=ConnectionId(*self.client, *self.server),
            next_seq=(last.seq + consumed) % SEQ_MOD,
            expected_ack=last.ack,
            ttl=last.ttl,
            last_window=self.last_window if self.last_window is not None else last.window,
            secured=self.secured,
            checkpoint_interval=self.interval,
            since_checkpoint=self.since,
            last_checkpoint=self.last_tag,
        )


def extract_session_intel(observed: Sequence[Segment],
                          client: tuple[str, int] | None = None) -> SessionIntel:
    """Derive the hijack parameters from sniffed segments.

    The client is whoever sent the first bare SYN. Without one, `client`
    should be given; failing that, the first segment decides (the receiver
    of a SYN|ACK, otherwise the sender).
    Sequence arithmetic: PSH segments consume their payload length, every
    other client segment (pure ACKs, checkpoints) consumes nothing.
    """
    if not observed:
        raise IntelUnavailable("nothing observed")
    if client is None:
        syn = next((s for s in observed if s.has(Flags.SYN) and not s.has(Flags.ACK)), None)
        client = syn.src if syn is not None else None
    tracker = IntelTracker(client)
    for seg in observed:
        tracker.feed(seg)
    return tracker.intel()


def forge_injection(intel: SessionIntel, data: bytes, *, ttl: int = FORGED_TTL,
                    window: int = FORGED_WINDOW) -> Segment:
    c = intel.conn
    return Segment(c.client_ip, c.server_ip, c.client_port, c.server_port,
                   seq=intel.next_seq, ack=intel.expected_ack, flags=Flags.ACK | Flags.PSH,
                   window=window, ttl=ttl, payload=bytes(data))


def forge_rst(intel: SessionIntel, target: str = "client") -> Segment:
    c = intel.conn
    if target == "client":
        return Segment(c.server_ip, c.client_ip, c.server_port, c.client_port,
                       seq=intel.expected_ack, ack=intel.next_seq, flags=Flags.RST,
                       window=0, ttl=FORGED_TTL)
    if target == "server":
        return Segment(c.client_ip, c.server_ip, c.client_port, c.server_port,
                       seq=intel.next_seq, ack=intel.expected_ack, flags=Flags.RST,
                       window=0, ttl=FORGED_TTL)
    raise ValueError(f"target must be 'client' or 'server', not {target!r}")


def forge_checkpoint(intel: SessionIntel) -> Segment:
    """Best effort without the key: replay the last digest seen on the wire."""
    c = intel.conn
    tag = intel.last_checkpoint or bytes(20)
    return Segment(c.client_ip, c.server_ip, c.client_port, c.server_port,
                   seq=intel.next_seq, ack=intel.expected_ack, flags=Flags.ACK,
                   window=CHECKPOINT_WINDOW, ttl=FORGED_TTL, payload=tag)


class Attacker:
    """Tap that keeps the raw bytes of every frame it sees.

    Intel is rebuilt from those bytes only. Frames the attacker injected
    itself are marked so it can tell its own RSTs from the endpoints'.
    """

    def __init__(self):
        self.observed: list[tuple[bytes, bool]] = []
        self.injected: list[Segment] = []
        self._tracker = IntelTracker()
        self._resets: set[tuple[str, int]] = set()

    def __call__(self, net: SimNet, frame: Frame) -> Verdict:
        raw = serialize_segment(frame.segment)
        self.observed.append((raw, frame.injected))
        seg = parse_segment(raw)
        self._tracker.feed(seg)
        if seg.has(Flags.RST) and not frame.injected:
            self._resets.add(seg.src)
        return Verdict.PASS

    def forget(self) -> None:
        self.observed.clear()
        self._tracker = IntelTracker()
        self._resets.clear()

    def segments(self, include_own: bool = True) -> list[Segment]:
        return [parse_segment(raw) for raw, own in self.observed if include_own or not own]

    def intel(self) -> SessionIntel:
        return self._tracker.intel()

    def inject(self, net: SimNet, seg: Segment, note: str = "") -> None:
        self.injected.append(seg)
        net.inject(seg, note)

    def saw_reset_from(self, addr: tuple[str, int]) -> bool:
        return addr in self._resets


@dataclass
class HijackReport:
    mode: str
    server_accepted_forgery: bool
    detected_at_checkpoint: int | None
    forged_accepted_before_detection: int
    client_reset: bool
    transcript: str | None
    injected_window: int | None = field(default=None, repr=False)
    forged_sent: int = field(default=0, repr=False)
    checkpoints_ok: int = field(default=0, repr=False)
    checkpoints_failed: int = field(default=0, repr=False)
    server_accepted: list[bytes] = field(default_factory=list, repr=False)
    server_verified: list[bytes] = field(default_factory=list, repr=False)
    server_log: list[str] = field(default_factory=list, repr=False)
    events: list = field(default_factory=list, repr=False)

    SCHEMA = ("mode", "server_accepted_forgery", "detected_at_checkpoint",
              "forged_accepted_before_detection", "client_reset", "transcript")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.SCHEMA}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def honest_payload(i: int) -> bytes:
    return HONEST_COMMANDS[i % len(HONEST_COMMANDS)]


def run_hijack(
    mode: Mode | str = Mode.PLAIN,
    command: bytes = DEFAULT_COMMAND,
    seed: int = 0,
    *,
    window: int = 100,
    honest_packets: int = 3,
    attack: bool = True,
    rst_first: bool = False,
    follow_up: bytes = b"id",
    max_forged: int | None = None,
    transcript: str | Path | None = None,
    client_addr: tuple[str, int] = LAB_CLIENT,
    server_addr: tuple[str, int] = LAB_SERVER,
    client_isn: int | None = None,
    server_isn: int | None = None,
    fixed_dh: tuple[int, int, int, int] | None = None,
    dh_prime_bits: int = 32,
    server_keys: RsaKeyPair | None = None,
    net: SimNet | None = None,
) -> HijackReport:
    """Honest handshake and traffic, then sniff, inject `command`, RST the client.

    In secured mode the attacker then tries to keep the session it stole:
    it keeps pumping forged `follow_up` segments and, once it has learned
    the checkpoint cadence, replays the last checkpoint it saw. That is the
    best it can do without the session key.
    """
    mode = Mode(mode)
    command = command.encode() if isinstance(command, str) else bytes(command)
    if mode is Mode.SECURED and server_keys is None:
        server_keys = demo_keypair(seed)
    common = dict(mode=mode, window=window, fixed_dh=fixed_dh, dh_prime_bits=dh_prime_bits)
    ccfg = SecureConfig(**common, server_public=server_keys.public if server_keys else None, ttl=128)
    scfg = SecureConfig(**common, server_keys=server_keys, ttl=64)

    net = net or SimNet()
    net.add_host("client", client_addr[0])
    net.add_host("server", server_addr[0])
    spy = net.attach_tap(Attacker())
    client = ClientHost("client", net, ccfg, random.Random(f"{seed}:client"))
    server = ServerHost("server", net, scfg, random.Random(f"{seed}:server"), isn=server_isn)
    drivers = {"client": client, "server": server}
    conn = ConnectionId(*client_addr, *server_addr)

    client.connect(conn, isn=client_isn)
    net.run_until_idle(drivers)
    if not (client.active and server.active):
        raise SimulationError(f"handshake did not complete: client {client.state.name}, "
                              f"server {server.state.name}")
    for i in range(honest_packets):
        client.send(honest_payload(i))
    if not attack:
        client.flush()
    net.run_until_idle(drivers)

    forged = 0
    injected_window = None
    if attack:
        if rst_first:
            spy.inject(net, forge_rst(spy.intel(), "client"), "forged RST to client")
            net.run_until_idle(drivers)
        if mode is Mode.SECURED:
            injected_window = server.session.recv_verifier.ordinal
        spy.inject(net, forge_injection(spy.intel(), command), "forged command")
        forged += 1
        net.run_until_idle(drivers)
        if not rst_first:
            spy.inject(net, forge_rst(spy.intel(), "client"), "forged RST to client")
            net.run_until_idle(drivers)

        cap = max_forged if max_forged is not None else 2 * window + 10
        while spy.intel().secured and not spy.saw_reset_from(server_addr) and forged < cap:
            intel = spy.intel()
            if intel.checkpoint_interval and intel.since_checkpoint >= intel.checkpoint_interval:
                spy.inject(net, forge_checkpoint(intel), "replayed checkpoint")
            else:
                spy.inject(net, forge_injection(intel, follow_up), "forged follow-up")
                forged += 1
            net.run_until_idle(drivers)

    sess = server.session
    extra = sess.accepted_payloads[honest_packets:]
    # a payload delivered inside a window whose checkpoint later failed is revoked
    forgery_stood = attack and command in extra and (
        sess.failed_window is None or command in sess.verified_payloads[honest_packets:])
    if transcript is not None:
        write_transcript(net.transcript, transcript)
    return HijackReport(
        mode=mode.value,
        server_accepted_forgery=forgery_stood,
        detected_at_checkpoint=sess.failed_window,
        forged_accepted_before_detection=len(extra),
        client_reset=client.state is State.RESET,
        transcript=str(transcript) if transcript is not None else None,
        injected_window=injected_window,
        forged_sent=forged,
        checkpoints_ok=sum(r.kind is ReceiptKind.CHECKPOINT_OK for r in server.receipts),
        checkpoints_failed=sum(r.kind is ReceiptKind.CHECKPOINT_FAIL for r in server.receipts),
        server_accepted=list(sess.accepted_payloads),
        server_verified=list(sess.verified_payloads),
        server_log=list(server.log),
        events=list(net.transcript),
    )
