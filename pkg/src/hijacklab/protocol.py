"""Handshake state machines and the windowed integrity checkpoint.

Two modes share one session type:

``plain``
    RFC-style three-way handshake (SYN consumes one sequence number,
    acknowledgments are ``J+1`` / ``I+1``). No authentication after the
    handshake, so anyone who knows the 4-tuple and the next sequence number
    can speak for either endpoint.

``secured``
    The client RSA-encrypts ``p$g$YC`` to the server's public key in the
    SYN; the server answers with an RSA signature over ``YS`` in the
    SYN|ACK; the client proves knowledge of the DH key ``K`` with
    ``HMAC-SHA1(K, auth_message)`` in the final ACK. Acknowledgment numbers
    are echoed literally (``ack=J`` then ``ack=I``) and the handshake
    consumes no sequence space.

Once established, every W-th data segment in secured mode is followed by a
checkpoint segment (flags ``ACK``, window ``0xFFFF``) carrying an HMAC over
everything sent in that window. The receiver holds the W-th payload until
the checkpoint verifies, so at most W-1 unverified payloads ever reach the
application.
"""

from __future__ import annotations

import enum
import hmac
import random
from dataclasses import dataclass, field

from . import crypto
from .crypto import CryptoError, DhParams, RsaKeyPair, RsaPublicKey
from .segment import CHECKPOINT_WINDOW, ConnectionId, Flags, Segment

SEQ_MOD = 1 << 32
DEFAULT_WINDOW = 100


class Mode(str, enum.Enum):
    PLAIN = "plain"
    SECURED = "secured"


class State(enum.Enum):
    CLOSED = "CLOSED"
    SYN_SENT = "SYN_SENT"
    SYN_RCVD = "SYN_RCVD"
    ESTABLISHED = "ESTABLISHED"
    FAILED = "FAILED"
    RESET = "RESET"


class ProtocolError(Exception):
    pass


class ConfigError(ProtocolError):
    pass


class StateError(ProtocolError):
    pass


class Establishment(enum.Enum):
    ESTABLISHED = "established"
    FAILED = "failed"
    IGNORED = "ignored"


class ReceiptKind(enum.Enum):
    ACCEPTED = "accepted"
    HELD = "held"
    CHECKPOINT_OK = "checkpoint-ok"
    CHECKPOINT_FAIL = "checkpoint-fail"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Receipt:
    kind: ReceiptKind
    payload: bytes | None = None
    reason: str | None = None
    window: int | None = None


@dataclass
class SecureConfig:
    mode: Mode = Mode.SECURED
    window: int = DEFAULT_WINDOW
    dh_prime_bits: int = 32
    # (p, g, XC, XS); the client uses XC, the server XS
    fixed_dh: tuple[int, int, int, int] | None = None
    auth_message: bytes = b"message"
    server_public: RsaPublicKey | None = None
    server_keys: RsaKeyPair | None = None
    ttl: int = 64
    rcv_window: int = 64240

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.window < 1:
            raise ConfigError("window value must be >= 1")
        if self.dh_prime_bits < 4:
            raise ConfigError("dh_prime_bits must be >= 4")
        if self.rcv_window == CHECKPOINT_WINDOW:
            raise ConfigError("0xFFFF is reserved as the checkpoint marker")
        if self.fixed_dh is not None:
            p, g, xc, xs = self.fixed_dh
            try:
                DhParams(p, g)
            except CryptoError as exc:
                raise ConfigError(str(exc)) from None
            if not (1 <= xc < p and 1 <= xs < p):
                raise ConfigError("fixed DH private exponents must lie in [1, p)")
        if self.server_keys is not None and self.server_public is None:
            self.server_public = self.server_keys.public


class WindowVerifier:
    """One direction's transcript accumulator.

    The transcript of window ``i`` is ``label || i (8 bytes BE)`` followed by
    each payload framed as ``len (4 bytes BE) || payload``.
    """

    def __init__(self, window: int, key: bytes, label: bytes):
        if window < 1:
            raise ConfigError("window value must be >= 1")
        self.window = window
        self.key = key
        self.label = label
        self.ordinal = 0
        self.counter = 0
        self.computations = 0
        self.payloads: list[bytes] = []
        self.transcript = self._prefix()

    def _prefix(self) -> bytearray:
        return bytearray(self.label + self.ordinal.to_bytes(8, "big"))

    @property
    def full(self) -> bool:
        return self.counter >= self.window

    def absorb(self, payload: bytes) -> bool:
        self.transcript += len(payload).to_bytes(4, "big")
        self.transcript += payload
        self.payloads.append(payload)
        self.counter += 1
        return self.counter >= self.window

    def digest(self) -> bytes:
        self.computations += 1
        return crypto.hmac_sha1(self.key, bytes(self.transcript))

    def advance(self) -> list[bytes]:
        done = self.payloads
        self.ordinal += 1
        self.counter = 0
        self.payloads = []
        self.transcript = self._prefix()
        return done


@dataclass
class DhMaterial:
    params: DhParams
    private: int
    public: int
    peer_public: int | None = None
    shared: int | None = None


@dataclass
class Session:
    mode: Mode
    conn: ConnectionId
    iss: int
    state: State = State.CLOSED
    snd_nxt: int = 0
    rcv_nxt: int = 0
    peer_iss: int | None = None
    dh: DhMaterial | None = None
    session_key: int | None = None
    send_verifier: WindowVerifier | None = None
    recv_verifier: WindowVerifier | None = None
    accepted_payloads: list[bytes] = field(default_factory=list)
    verified_payloads: list[bytes] = field(default_factory=list)
    held: bytes | None = None
    outbox: list[Segment] = field(default_factory=list)
    failure: str | None = None
    failed_window: int | None = None
    ttl: int = 64
    rcv_window: int = 64240

    is_client = True

    @property
    def local(self) -> tuple[str, int]:
        return self.conn.client if self.is_client else self.conn.server

    @property
    def remote(self) -> tuple[str, int]:
        return self.conn.server if self.is_client else self.conn.client

    def matches(self, seg: Segment) -> bool:
        return seg.src == self.remote and seg.dst == self.local

    def segment(self, flags: int, payload: bytes = b"", *, seq: int | None = None,
                ack: int | None = None, window: int | None = None) -> Segment:
        (sip, sport), (dip, dport) = self.local, self.remote
        return Segment(
            src_ip=sip, dst_ip=dip, src_port=sport, dst_port=dport,
            seq=self.snd_nxt if seq is None else seq,
            ack=self.rcv_nxt if ack is None else ack,
            flags=int(flags),
            window=self.rcv_window if window is None else window,
            ttl=self.ttl,
            payload=payload,
        )

    def drain(self) -> list[Segment]:
        out, self.outbox = self.outbox, []
        return out

    def _fail(self, reason: str) -> None:
        self.state = State.FAILED
        self.failure = reason
        self.session_key = None

    def _establish(self, key: int | None, window: int) -> None:
        self.state = State.ESTABLISHED
        if self.mode is Mode.SECURED:
            self.session_key = key
            k = crypto.encode_session_key(key)
            self.send_verifier = WindowVerifier(window, k, self.conn.label(self.is_client))
            self.recv_verifier = WindowVerifier(window, k, self.conn.label(not self.is_client))


class ClientSession(Session):
    is_client = True


class ServerSession(Session):
    is_client = False


def _new_session(cls, cfg: SecureConfig, conn: ConnectionId, iss: int) -> Session:
    return cls(mode=cfg.mode, conn=conn, iss=iss, ttl=cfg.ttl, rcv_window=cfg.rcv_window)


def _isn(rng: random.Random, isn: int | None) -> int:
    return rng.getrandbits(32) if isn is None else isn % SEQ_MOD


def client_start(cfg: SecureConfig, conn: ConnectionId, rng: random.Random,
                 isn: int | None = None) -> tuple[ClientSession, Segment]:
    sess = _new_session(ClientSession, cfg, conn, _isn(rng, isn))
    if cfg.mode is Mode.PLAIN:
        syn = sess.segment(Flags.SYN, seq=sess.iss, ack=0)
        sess.snd_nxt = (sess.iss + 1) % SEQ_MOD
    else:
        pub = cfg.server_public
        if pub is None:
            raise ConfigError("secured mode needs the server's RSA public key")
        if cfg.fixed_dh is not None:
            p, g, xc, _ = cfg.fixed_dh
        else:
            p = crypto.generate_prime(cfg.dh_prime_bits, rng)
            g = rng.randrange(2, p - 1)
            xc = rng.randrange(1, p)
        params = DhParams(p, g)
        yc = crypto.dh_public(params, xc)
        m = crypto.encode_handshake_payload(p, g, yc)
        if m >= pub.n:
            raise ConfigError(
                f"handshake payload needs {m.bit_length()} bits but the server modulus "
                f"has {pub.n.bit_length()}; use a larger RSA key or a smaller p")
        c = crypto.rsa_encrypt(pub, m)
        sess.dh = DhMaterial(params, xc, yc)
        sess.snd_nxt = sess.iss
        syn = sess.segment(Flags.SYN, crypto.int_to_bytes(c, crypto.modulus_bytes(pub.n)),
                           ack=0)
    sess.state = State.SYN_SENT
    return sess, syn


def server_on_syn(cfg: SecureConfig, seg: Segment, rng: random.Random,
                  isn: int | None = None) -> tuple[ServerSession, Segment | None]:
    """Answer a SYN. Returns ``(session, None)`` with state FAILED on a bad SYN payload."""
    if not seg.has(Flags.SYN) or seg.has(Flags.ACK):
        raise ProtocolError("server_on_syn needs a SYN without ACK")
    conn = ConnectionId(seg.src_ip, seg.src_port, seg.dst_ip, seg.dst_port)
    sess = _new_session(ServerSession, cfg, conn, _isn(rng, isn))
    sess.peer_iss = seg.seq
    if cfg.mode is Mode.PLAIN:
        sess.rcv_nxt = (seg.seq + 1) % SEQ_MOD
        reply = sess.segment(Flags.SYN | Flags.ACK, seq=sess.iss)
        sess.snd_nxt = (sess.iss + 1) % SEQ_MOD
        sess.state = State.SYN_RCVD
        return sess, reply

    keys = cfg.server_keys
    if keys is None:
        raise ConfigError("secured mode needs the server's RSA key pair")
    width = crypto.modulus_bytes(keys.public.n)
    try:
        if len(seg.payload) != width:
            raise crypto.PayloadParseError(f"SYN payload is {len(seg.payload)} bytes, expected {width}")
        m = crypto.rsa_decrypt(keys.private, crypto.int_from_bytes(seg.payload))
        p, g, yc = crypto.decode_handshake_payload(m)
        params = DhParams(p, g)
        xs = cfg.fixed_dh[3] if cfg.fixed_dh is not None else rng.randrange(1, p)
        ys = crypto.dh_public(params, xs)
        k = crypto.dh_shared(params, yc, xs)
        s = crypto.rsa_sign_recoverable(keys.private, ys)
    except CryptoError as exc:
        sess._fail(f"bad SYN payload: {exc}")
        return sess, None
    sess.dh = DhMaterial(params, xs, ys, peer_public=yc, shared=k)
    sess.rcv_nxt = seg.seq
    sess.snd_nxt = sess.iss
    reply = sess.segment(Flags.SYN | Flags.ACK, crypto.int_to_bytes(s, width))
    sess.state = State.SYN_RCVD
    return sess, reply


def client_on_synack(sess: ClientSession, cfg: SecureConfig, seg: Segment) -> Segment | None:
    """Complete the client side. Returns None when the segment is discarded."""
    if sess.state is not State.SYN_SENT or not sess.matches(seg):
        return None
    if not (seg.has(Flags.SYN) and seg.has(Flags.ACK)) or seg.ack != sess.snd_nxt:
        return None
    sess.peer_iss = seg.seq
    if sess.mode is Mode.PLAIN:
        sess.rcv_nxt = (seg.seq + 1) % SEQ_MOD
        sess._establish(None, cfg.window)
        return sess.segment(Flags.ACK)

    pub = cfg.server_public
    dh = sess.dh
    try:
        if len(seg.payload) != crypto.modulus_bytes(pub.n):
            raise crypto.PayloadParseError("SYN|ACK payload has the wrong width")
        ys = crypto.rsa_recover(pub, crypto.int_from_bytes(seg.payload))
        k = crypto.dh_shared(dh.params, ys, dh.private)
    except CryptoError as exc:
        sess._fail(f"bad SYN|ACK payload: {exc}")
        return None
    dh.peer_public, dh.shared = ys, k
    sess.rcv_nxt = seg.seq
    tag = crypto.hmac_sha1(crypto.encode_session_key(k), cfg.auth_message)
    sess._establish(k, cfg.window)
    return sess.segment(Flags.ACK, tag)


def server_on_ack(sess: ServerSession, cfg: SecureConfig, seg: Segment) -> Establishment:
    if sess.state is not State.SYN_RCVD or not sess.matches(seg):
        return Establishment.IGNORED
    if not seg.has(Flags.ACK) or seg.has(Flags.SYN) or seg.ack != sess.snd_nxt:
        return Establishment.IGNORED
    if sess.mode is Mode.PLAIN:
        sess._establish(None, cfg.window)
        return Establishment.ESTABLISHED
    k = sess.dh.shared
    expected = crypto.hmac_sha1(crypto.encode_session_key(k), cfg.auth_message)
    if not hmac.compare_digest(expected, seg.payload):
        sess._fail("handshake HMAC mismatch")
        return Establishment.FAILED
    sess._establish(k, cfg.window)
    return Establishment.ESTABLISHED


def _checkpoint(sess: Session) -> Segment:
    v = sess.send_verifier
    tag = v.digest()
    v.advance()
    return sess.segment(Flags.ACK, tag, window=CHECKPOINT_WINDOW)


def send_data(sess: Session, cfg: SecureConfig, payload: bytes) -> list[Segment]:
    if sess.state is not State.ESTABLISHED:
        raise StateError(f"cannot send in state {sess.state.name}")
    payload = bytes(payload)
    out = [sess.segment(Flags.PSH | Flags.ACK, payload)]
    sess.snd_nxt = (sess.snd_nxt + len(payload)) % SEQ_MOD
    if sess.mode is Mode.SECURED and sess.send_verifier.absorb(payload):
        out.append(_checkpoint(sess))
    return out


def flush_checkpoint(sess: Session, cfg: SecureConfig) -> list[Segment]:
    """Close a partially filled window early (e.g. at the end of a transfer)."""
    if sess.state is not State.ESTABLISHED:
        raise StateError(f"cannot send in state {sess.state.name}")
    if sess.mode is Mode.PLAIN or sess.send_verifier.counter == 0:
        return []
    return [_checkpoint(sess)]


def _reset_segment(sess: Session) -> Segment:
    return sess.segment(Flags.RST, window=0)


def _checkpoint_failed(sess: Session, reason: str) -> Receipt:
    ordinal = sess.recv_verifier.ordinal
    sess.held = None
    sess.failed_window = ordinal
    sess._fail(reason)
    sess.outbox.append(_reset_segment(sess))
    return Receipt(ReceiptKind.CHECKPOINT_FAIL, reason=reason, window=ordinal)


def recv_data(sess: Session, cfg: SecureConfig, seg: Segment) -> Receipt:
    if sess.state is not State.ESTABLISHED:
        return Receipt(ReceiptKind.REJECTED, reason=f"state {sess.state.name}")
    if not sess.matches(seg) or seg.seq != sess.rcv_nxt:
        return Receipt(ReceiptKind.REJECTED, reason="out-of-session")
    if seg.has(Flags.RST) or seg.has(Flags.SYN):
        return Receipt(ReceiptKind.REJECTED, reason="control segment")

    if sess.mode is Mode.PLAIN:
        if not seg.has(Flags.PSH):
            return Receipt(ReceiptKind.REJECTED, reason="not data")
        sess.rcv_nxt = (sess.rcv_nxt + len(seg.payload)) % SEQ_MOD
        sess.accepted_payloads.append(seg.payload)
        sess.verified_payloads.append(seg.payload)
        return Receipt(ReceiptKind.ACCEPTED, payload=seg.payload)

    v = sess.recv_verifier
    if seg.is_checkpoint:
        ordinal = v.ordinal
        if not hmac.compare_digest(v.digest(), seg.payload):
            return _checkpoint_failed(sess, f"checkpoint {ordinal} HMAC mismatch")
        sess.verified_payloads.extend(v.advance())
        if sess.held is not None:
            sess.accepted_payloads.append(sess.held)
            sess.held = None
        return Receipt(ReceiptKind.CHECKPOINT_OK, window=ordinal)
    if not seg.has(Flags.PSH):
        return Receipt(ReceiptKind.REJECTED, reason="not data")
    if v.full:
        return _checkpoint_failed(sess, f"checkpoint {v.ordinal} missing")
    sess.rcv_nxt = (sess.rcv_nxt + len(seg.payload)) % SEQ_MOD
    if v.absorb(seg.payload):
        sess.held = seg.payload
        return Receipt(ReceiptKind.HELD, payload=seg.payload, window=v.ordinal)
    sess.accepted_payloads.append(seg.payload)
    return Receipt(ReceiptKind.ACCEPTED, payload=seg.payload, window=v.ordinal)


def on_rst(sess: Session, seg: Segment) -> bool:
    """Apply a RST; returns True when the session was torn down."""
    if not seg.has(Flags.RST) or not sess.matches(seg):
        return False
    if sess.state is State.SYN_SENT:
        acceptable = seg.has(Flags.ACK) and seg.ack == sess.snd_nxt
    elif sess.state in (State.SYN_RCVD, State.ESTABLISHED):
        acceptable = seg.seq == sess.rcv_nxt
    else:
        acceptable = False
    if acceptable:
        sess.state = State.RESET
        sess.session_key = None
        sess.held = None
    return acceptable
