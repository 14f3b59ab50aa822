"""Endpoint drivers: glue between protocol sessions and the simulator."""

from __future__ import annotations

import random

from . import protocol
from .netsim import SimNet
from .protocol import Establishment, ReceiptKind, SecureConfig, State
from .segment import ConnectionId, Flags, Segment


def _show(payload: bytes) -> str:
    return payload.decode("utf-8", errors="replace")


class Endpoint:
    def __init__(self, name: str, net: SimNet, cfg: SecureConfig, rng: random.Random):
        self.name = name
        self.net = net
        self.cfg = cfg
        self.rng = rng
        self.session: protocol.Session | None = None
        self.receipts: list[protocol.Receipt] = []
        self.log: list[str] = []

    @property
    def state(self) -> State:
        return self.session.state if self.session else State.CLOSED

    @property
    def active(self) -> bool:
        return self.state is State.ESTABLISHED

    def _recv(self, seg: Segment) -> list[Segment]:
        sess = self.session
        before = len(sess.accepted_payloads)
        r = protocol.recv_data(sess, self.cfg, seg)
        self.receipts.append(r)
        # a checkpoint may release the held payload, so log by list growth
        for payload in sess.accepted_payloads[before:]:
            self.log.append(f"Recv: {_show(payload)}")
        if r.kind is ReceiptKind.CHECKPOINT_FAIL:
            self.net.alarm(self.name, f"{r.reason}; tearing down {sess.conn.label().decode()}")
            revoked = len(sess.recv_verifier.payloads)
            self.log.append(f"ALARM: {r.reason}; {revoked} unverified payloads of window {r.window} revoked")
        return sess.drain()

    def _rst(self, seg: Segment) -> list[Segment]:
        if protocol.on_rst(self.session, seg):
            self.log.append("Connection reset by peer")
        return []

    def send(self, payload: bytes) -> None:
        for seg in protocol.send_data(self.session, self.cfg, payload):
            self.net.send(self.name, seg)

    def flush(self) -> None:
        for seg in protocol.flush_checkpoint(self.session, self.cfg):
            self.net.send(self.name, seg)


class ClientHost(Endpoint):
    def connect(self, conn: ConnectionId, isn: int | None = None) -> None:
        self.session, syn = protocol.client_start(self.cfg, conn, self.rng, isn)
        self.net.send(self.name, syn)

    def __call__(self, seg: Segment) -> list[Segment]:
        if self.session is None or self.state in (State.RESET, State.FAILED, State.CLOSED):
            return []
        if seg.has(Flags.RST):
            return self._rst(seg)
        if self.state is State.SYN_SENT:
            ack = protocol.client_on_synack(self.session, self.cfg, seg)
            if self.state is State.FAILED:
                self.net.alarm(self.name, f"handshake failed: {self.session.failure}")
            return [ack] if ack is not None else []
        return self._recv(seg)


class ServerHost(Endpoint):
    def __init__(self, *args, isn: int | None = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.isn = isn
        self.log.append("Listening...")

    def __call__(self, seg: Segment) -> list[Segment]:
        if self.session is None:
            if not seg.has(Flags.SYN) or seg.has(Flags.ACK):
                return []
            self.session, reply = protocol.server_on_syn(self.cfg, seg, self.rng, self.isn)
            if reply is None:
                self.net.alarm(self.name, f"handshake rejected: {self.session.failure}")
                return []
            return [reply]
        if self.state in (State.RESET, State.FAILED):
            return []
        if seg.has(Flags.RST):
            return self._rst(seg)
        if self.state is State.SYN_RCVD:
            result = protocol.server_on_ack(self.session, self.cfg, seg)
            if result is Establishment.ESTABLISHED:
                ip, port = self.session.conn.client
                self.log += ["Accept!", f"Connection addr: ({ip}, {port})"]
            elif result is Establishment.FAILED:
                self.net.alarm(self.name, f"handshake failed: {self.session.failure}")
            return []
        return self._recv(seg)
