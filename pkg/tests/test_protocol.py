import dataclasses
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hijacklab import crypto, protocol
from hijacklab.protocol import (
    ConfigError,
    Establishment,
    Mode,
    ReceiptKind,
    SecureConfig,
    State,
    StateError,
)
from hijacklab.segment import CHECKPOINT_WINDOW, ConnectionId, Flags, Segment

CONN = ConnectionId("192.168.0.104", 59999, "192.168.0.105", 49999)
KEYS = crypto.demo_keypair(0)
LAB_DH = (97, 5, 36, 58)
ISN_C, ISN_S = 1000, 5000


def configs(mode=Mode.SECURED, **kw):
    if mode is Mode.PLAIN:
        return SecureConfig(Mode.PLAIN, **kw), SecureConfig(Mode.PLAIN, **kw)
    return (SecureConfig(mode, server_public=KEYS.public, **kw),
            SecureConfig(mode, server_keys=KEYS, **kw))


def handshake(mode=Mode.SECURED, seed=0, **kw):
    ccfg, scfg = configs(mode, **kw)
    rng = random.Random(seed)
    c, syn = protocol.client_start(ccfg, CONN, rng, ISN_C)
    s, synack = protocol.server_on_syn(scfg, syn, rng, ISN_S)
    ack = protocol.client_on_synack(c, ccfg, synack)
    result = protocol.server_on_ack(s, scfg, ack)
    return c, s, ccfg, scfg, [syn, synack, ack], result


def flip_bit(data, pos):
    b = bytearray(data)
    b[pos // 8] ^= 1 << (pos % 8)
    return bytes(b)


class TestPlainHandshake:
    def test_rfc_numbers(self):
        c, s, _, _, (syn, synack, ack), result = handshake(Mode.PLAIN)
        assert result is Establishment.ESTABLISHED
        assert c.state is s.state is State.ESTABLISHED
        assert syn.flags == Flags.SYN and syn.seq == ISN_C
        assert synack.flags == Flags.SYN | Flags.ACK
        assert (synack.seq, synack.ack) == (ISN_S, ISN_C + 1)
        assert (ack.flags, ack.seq, ack.ack) == (Flags.ACK, ISN_C + 1, ISN_S + 1)
        assert c.snd_nxt == s.rcv_nxt == ISN_C + 1
        assert s.snd_nxt == c.rcv_nxt == ISN_S + 1

    def test_isn_wraps(self):
        ccfg, scfg = configs(Mode.PLAIN)
        c, syn = protocol.client_start(ccfg, CONN, random.Random(0), 2**32 - 1)
        assert c.snd_nxt == 0


class TestSecuredHandshake:
    def test_reference_values(self):
        c, s, ccfg, _, (syn, synack, ack), result = handshake(fixed_dh=LAB_DH)
        assert result is Establishment.ESTABLISHED
        assert c.dh.public == 50 and s.dh.public == 44
        assert c.session_key == s.session_key == 75
        assert ack.payload.hex() == "ada668f4688e906e157d8613dc4408ce00de1cf0"
        m = crypto.rsa_decrypt(KEYS.private, int.from_bytes(syn.payload, "big"))
        assert crypto.int_to_bytes(m) == b"97$5$50"
        assert crypto.rsa_recover(KEYS.public, int.from_bytes(synack.payload, "big")) == 44

    def test_literal_ack_numbers(self):
        c, s, _, _, (syn, synack, ack), _ = handshake(fixed_dh=LAB_DH)
        assert (syn.seq, syn.ack) == (ISN_C, 0)
        assert (synack.seq, synack.ack) == (ISN_S, ISN_C)
        assert (ack.seq, ack.ack) == (ISN_C, ISN_S)
        # no sequence space consumed by the handshake
        assert c.snd_nxt == s.rcv_nxt == ISN_C
        assert s.snd_nxt == c.rcv_nxt == ISN_S

    def test_payload_widths(self):
        _, _, _, _, (syn, synack, ack), _ = handshake()
        assert len(syn.payload) == len(synack.payload) == crypto.modulus_bytes(KEYS.public.n)
        assert len(ack.payload) == 20

    def test_keys_agree_random_dh(self):
        rng = random.Random(200)
        for trial in range(200):
            p = crypto.generate_prime(rng.randint(8, 48), rng)
            dh = (p, rng.randrange(2, p - 1), rng.randrange(1, p), rng.randrange(1, p))
            c, s, *_, result = handshake(fixed_dh=dh, seed=trial)
            assert result is Establishment.ESTABLISHED
            assert c.session_key == s.session_key == pow(dh[1], dh[2] * dh[3], p)

    def test_random_params_agree(self):
        for seed in range(20):
            c, s, *_, result = handshake(seed=seed)
            assert result is Establishment.ESTABLISHED
            assert c.session_key == s.session_key

    def test_wrong_auth_message_fails(self):
        ccfg, scfg = configs()
        ccfg.auth_message = b"other"
        rng = random.Random(0)
        c, syn = protocol.client_start(ccfg, CONN, rng, ISN_C)
        s, synack = protocol.server_on_syn(scfg, syn, rng, ISN_S)
        ack = protocol.client_on_synack(c, ccfg, synack)
        assert protocol.server_on_ack(s, scfg, ack) is Establishment.FAILED
        assert s.state is State.FAILED and s.session_key is None

    def test_payload_too_big_for_modulus(self):
        small = crypto.rsa_keygen(32, 65537, random.Random(1))
        cfg = SecureConfig(Mode.SECURED, fixed_dh=LAB_DH, server_public=small.public)
        with pytest.raises(ConfigError):
            protocol.client_start(cfg, CONN, random.Random(0))

    def test_needs_keys(self):
        with pytest.raises(ConfigError):
            protocol.client_start(SecureConfig(Mode.SECURED), CONN, random.Random(0))


class TestTamper:
    """A single flipped bit in any handshake payload must end in FAILED."""

    def _run(self, which, pos, seed):
        ccfg, scfg = configs()
        rng = random.Random(seed)
        c, syn = protocol.client_start(ccfg, CONN, rng, ISN_C)
        if which == 0:
            syn = dataclasses.replace(syn, payload=flip_bit(syn.payload, pos))
        s, synack = protocol.server_on_syn(scfg, syn, rng, ISN_S)
        if synack is None:
            return c, s, "server"
        if which == 1:
            synack = dataclasses.replace(synack, payload=flip_bit(synack.payload, pos))
        ack = protocol.client_on_synack(c, ccfg, synack)
        if ack is None:
            return c, s, "client"
        if which == 2:
            ack = dataclasses.replace(ack, payload=flip_bit(ack.payload, pos))
        protocol.server_on_ack(s, scfg, ack)
        return c, s, "server"

    @pytest.mark.parametrize("which", [0, 1, 2])
    def test_single_bit_mutations(self, which):
        rng = random.Random(which)
        width = crypto.modulus_bytes(KEYS.public.n) if which < 2 else 20
        for trial in range(100):
            c, s, receiver = self._run(which, rng.randrange(width * 8), trial)
            assert (s if receiver == "server" else c).state is State.FAILED
            assert not (c.state is State.ESTABLISHED and s.state is State.ESTABLISHED)

    def test_random_syn_payload(self):
        rng = random.Random(1000)
        _, scfg = configs()
        width = crypto.modulus_bytes(KEYS.public.n)
        for _ in range(1000):
            syn = Segment(CONN.client_ip, CONN.server_ip, CONN.client_port, CONN.server_port,
                          seq=1, flags=Flags.SYN, payload=rng.randbytes(width))
            s, reply = protocol.server_on_syn(scfg, syn, rng)
            assert reply is None and s.state is State.FAILED

    def test_wrong_width_syn(self):
        _, scfg = configs()
        syn = Segment(CONN.client_ip, CONN.server_ip, CONN.client_port, CONN.server_port,
                      flags=Flags.SYN, payload=b"97$5$50")
        s, reply = protocol.server_on_syn(scfg, syn, random.Random(0))
        assert reply is None and "bad SYN payload" in s.failure


class TestDiscards:
    def test_synack_wrong_ack_ignored(self):
        ccfg, scfg = configs()
        rng = random.Random(0)
        c, syn = protocol.client_start(ccfg, CONN, rng, ISN_C)
        s, synack = protocol.server_on_syn(scfg, syn, rng, ISN_S)
        bad = dataclasses.replace(synack, ack=synack.ack + 1)
        assert protocol.client_on_synack(c, ccfg, bad) is None
        assert c.state is State.SYN_SENT
        assert protocol.client_on_synack(c, ccfg, synack) is not None

    def test_synack_wrong_port_ignored(self):
        ccfg, scfg = configs()
        rng = random.Random(0)
        c, syn = protocol.client_start(ccfg, CONN, rng, ISN_C)
        s, synack = protocol.server_on_syn(scfg, syn, rng, ISN_S)
        assert protocol.client_on_synack(c, ccfg, dataclasses.replace(synack, src_port=1)) is None
        assert c.state is State.SYN_SENT

    def test_final_ack_wrong_number_ignored(self):
        ccfg, scfg = configs(Mode.PLAIN)
        rng = random.Random(0)
        c, syn = protocol.client_start(ccfg, CONN, rng, ISN_C)
        s, synack = protocol.server_on_syn(scfg, syn, rng, ISN_S)
        ack = protocol.client_on_synack(c, ccfg, synack)
        bad = dataclasses.replace(ack, ack=ack.ack + 7)
        assert protocol.server_on_ack(s, scfg, bad) is Establishment.IGNORED
        assert s.state is State.SYN_RCVD
        assert protocol.server_on_ack(s, scfg, ack) is Establishment.ESTABLISHED

    def test_server_on_syn_requires_bare_syn(self):
        _, scfg = configs(Mode.PLAIN)
        seg = Segment(CONN.client_ip, CONN.server_ip, 1, 2, flags=Flags.SYN | Flags.ACK)
        with pytest.raises(protocol.ProtocolError):
            protocol.server_on_syn(scfg, seg, random.Random(0))


def transfer(c, s, ccfg, scfg, payloads, flush=False):
    receipts, wire = [], []
    for p in payloads:
        wire += protocol.send_data(c, ccfg, p)
    if flush:
        wire += protocol.flush_checkpoint(c, ccfg)
    for seg in wire:
        receipts.append(protocol.recv_data(s, scfg, seg))
    return wire, receipts


def kinds(receipts, kind):
    return sum(r.kind is kind for r in receipts)


class TestWindow:
    def test_w2_two_payloads_three_segments(self):
        c, s, ccfg, scfg, *_ = handshake(window=2)
        wire, receipts = transfer(c, s, ccfg, scfg, [b"a", b"b"])
        assert len(wire) == 3
        cp = wire[2]
        assert cp.is_checkpoint and cp.flags == Flags.ACK and cp.window == CHECKPOINT_WINDOW
        assert len(cp.payload) == 20
        assert cp.seq == ISN_C + 2  # checkpoint consumes nothing
        assert [r.kind for r in receipts] == [ReceiptKind.ACCEPTED, ReceiptKind.HELD,
                                             ReceiptKind.CHECKPOINT_OK]
        assert s.verified_payloads == [b"a", b"b"] == s.accepted_payloads

    def test_250_packets_w100(self):
        c, s, ccfg, scfg, *_ = handshake(window=100)
        wire, receipts = transfer(c, s, ccfg, scfg, [b"x%d" % i for i in range(250)])
        assert sum(seg.is_checkpoint for seg in wire) == 2
        assert kinds(receipts, ReceiptKind.CHECKPOINT_OK) == 2
        assert len(s.verified_payloads) == 200
        assert len(s.accepted_payloads) == 250

    def test_300_packets_w100(self):
        c, s, ccfg, scfg, *_ = handshake(window=100)
        _, receipts = transfer(c, s, ccfg, scfg, [b"p"] * 300)
        assert kinds(receipts, ReceiptKind.CHECKPOINT_OK) == 3
        assert kinds(receipts, ReceiptKind.CHECKPOINT_FAIL) == 0

    def test_flush_closes_partial_window(self):
        c, s, ccfg, scfg, *_ = handshake(window=10)
        wire, receipts = transfer(c, s, ccfg, scfg, [b"a"] * 3, flush=True)
        assert receipts[-1].kind is ReceiptKind.CHECKPOINT_OK
        assert protocol.flush_checkpoint(c, ccfg) == []
        assert s.verified_payloads == [b"a"] * 3

    def test_checkpoint_key_and_transcript(self):
        c, s, ccfg, scfg, *_ = handshake(window=2, fixed_dh=LAB_DH)
        wire, _ = transfer(c, s, ccfg, scfg, [b"ab", b""])
        transcript = (CONN.label() + bytes(8) + (2).to_bytes(4, "big") + b"ab" + bytes(4))
        assert wire[2].payload == crypto.hmac_sha1(b"75", transcript)

    def test_w1_holds_every_payload(self):
        c, s, ccfg, scfg, *_ = handshake(window=1)
        wire, receipts = transfer(c, s, ccfg, scfg, [b"a", b"b", b"c"])
        assert len(wire) == 6
        assert [r.kind for r in receipts[:2]] == [ReceiptKind.HELD, ReceiptKind.CHECKPOINT_OK]

    @pytest.mark.parametrize("w", [1, 2, 10, 100])
    @given(payloads=st.lists(st.binary(max_size=40), max_size=250))
    @settings(max_examples=25, deadline=None)
    def test_honest_transfer_never_fails(self, w, payloads):
        c, s, ccfg, scfg, *_ = handshake(window=w)
        _, receipts = transfer(c, s, ccfg, scfg, payloads, flush=True)
        assert kinds(receipts, ReceiptKind.CHECKPOINT_FAIL) == 0
        assert kinds(receipts, ReceiptKind.REJECTED) == 0
        assert s.verified_payloads == payloads == s.accepted_payloads
        assert s.state is State.ESTABLISHED

    def test_plain_mode_has_no_checkpoints(self):
        c, s, ccfg, scfg, *_ = handshake(Mode.PLAIN)
        wire, receipts = transfer(c, s, ccfg, scfg, [b"x"] * 150, flush=True)
        assert len(wire) == 150
        assert all(r.kind is ReceiptKind.ACCEPTED for r in receipts)

    def test_send_requires_established(self):
        ccfg, _ = configs()
        c, _ = protocol.client_start(ccfg, CONN, random.Random(0))
        with pytest.raises(StateError):
            protocol.send_data(c, ccfg, b"x")


def forge(s, payload):
    """Data segment an on-path attacker would write, using the server's view of the stream."""
    return Segment(CONN.client_ip, CONN.server_ip, CONN.client_port, CONN.server_port,
                   seq=s.rcv_nxt, ack=s.snd_nxt, flags=Flags.ACK | Flags.PSH, payload=payload)


def run_with_injection(w, offset, count, windows=3):
    """Honest client sends `windows` windows; `count` forgeries go in before honest packet `offset`.

    The attacker shifts the honest segments that follow so their sequence
    numbers keep lining up, which is the strongest in-stream position it has.
    """
    c, s, ccfg, scfg, *_ = handshake(window=w)
    wire = []
    for i in range(w * windows):
        wire += protocol.send_data(c, ccfg, b"h%03d" % i)
    shift, receipts, forged_ids = 0, [], []
    data_seen = 0
    for seg in wire:
        if not seg.is_checkpoint:
            if data_seen == offset:
                for j in range(count):
                    f = forge(s, b"evil%d" % j)
                    forged_ids.append(f.payload)
                    receipts.append(protocol.recv_data(s, scfg, f))
                    shift += len(f.payload)
            data_seen += 1
        receipts.append(protocol.recv_data(s, scfg, dataclasses.replace(seg, seq=seg.seq + shift)))
        if s.state is not State.ESTABLISHED:
            break
    return s, receipts, forged_ids


class TestDetection:
    @pytest.mark.parametrize("count", [1, 2, 3])
    def test_brute_force_offsets_w10(self, count):
        w = 10
        for offset in range(2 * w):
            s, receipts, forged = run_with_injection(w, offset, count)
            assert s.state is State.FAILED
            assert s.failed_window == offset // w
            assert kinds(receipts, ReceiptKind.CHECKPOINT_FAIL) == 1
            leaked = [p for p in s.accepted_payloads if p in forged]
            assert len(leaked) <= w - 1
            assert not any(p in forged for p in s.verified_payloads)
            assert s.outbox and s.outbox[-1].flags == Flags.RST

    @pytest.mark.parametrize("w", [1, 5, 10, 100])
    def test_exposure_bound(self, w):
        for offset in range(w):
            s, _, forged = run_with_injection(w, offset, 1, windows=2)
            leaked = [p for p in s.accepted_payloads if p in forged]
            assert s.failed_window == 0
            assert len(leaked) <= w - 1
            if w == 1:
                assert leaked == []

    def test_modified_payload_detected(self):
        c, s, ccfg, scfg, *_ = handshake(window=5)
        wire = []
        for i in range(5):
            wire += protocol.send_data(c, ccfg, b"abc")
        wire[2] = dataclasses.replace(wire[2], payload=b"abd")
        receipts = [protocol.recv_data(s, scfg, seg) for seg in wire]
        assert receipts[-1].kind is ReceiptKind.CHECKPOINT_FAIL
        assert "mismatch" in receipts[-1].reason

    def test_missing_checkpoint(self):
        c, s, ccfg, scfg, *_ = handshake(window=2)
        wire = []
        for _ in range(3):
            wire += protocol.send_data(c, ccfg, b"z")
        del wire[2]
        receipts = [protocol.recv_data(s, scfg, seg) for seg in wire]
        assert receipts[-1].kind is ReceiptKind.CHECKPOINT_FAIL
        assert "missing" in receipts[-1].reason
        assert s.held is None and s.accepted_payloads == [b"z"]

    def test_replayed_checkpoint(self):
        c, s, ccfg, scfg, *_ = handshake(window=3)
        wire, receipts = transfer(c, s, ccfg, scfg, [b"same"] * 3)
        old_cp = wire[-1]
        assert receipts[-1].kind is ReceiptKind.CHECKPOINT_OK
        for _ in range(3):
            for seg in protocol.send_data(c, ccfg, b"same"):
                if not seg.is_checkpoint:
                    protocol.recv_data(s, scfg, seg)
        r = protocol.recv_data(s, scfg, dataclasses.replace(old_cp, seq=s.rcv_nxt))
        assert r.kind is ReceiptKind.CHECKPOINT_FAIL and r.window == 1

    def test_out_of_session_rejected(self):
        c, s, ccfg, scfg, *_ = handshake(window=5)
        seg = protocol.send_data(c, ccfg, b"x")[0]
        r = protocol.recv_data(s, scfg, dataclasses.replace(seg, seq=seg.seq + 1))
        assert r.kind is ReceiptKind.REJECTED and r.reason == "out-of-session"
        r = protocol.recv_data(s, scfg, dataclasses.replace(seg, src_port=1))
        assert r.kind is ReceiptKind.REJECTED
        assert protocol.recv_data(s, scfg, seg).kind is ReceiptKind.ACCEPTED


class TestRst:
    def _rst_to_server(self, s, **kw):
        base = dict(src_ip=CONN.client_ip, dst_ip=CONN.server_ip, src_port=CONN.client_port,
                    dst_port=CONN.server_port, seq=s.rcv_nxt, flags=Flags.RST)
        base.update(kw)
        return Segment(**base)

    def test_matching_rst(self):
        _, s, *_ = handshake()
        assert protocol.on_rst(s, self._rst_to_server(s))
        assert s.state is State.RESET and s.session_key is None

    def test_wrong_port_ignored(self):
        _, s, *_ = handshake()
        assert not protocol.on_rst(s, self._rst_to_server(s, src_port=1234))
        assert s.state is State.ESTABLISHED

    def test_wrong_seq_ignored(self):
        _, s, *_ = handshake(Mode.PLAIN)
        assert not protocol.on_rst(s, self._rst_to_server(s, seq=s.rcv_nxt + 1))
        assert s.state is State.ESTABLISHED

    def test_not_rst_ignored(self):
        _, s, *_ = handshake()
        assert not protocol.on_rst(s, self._rst_to_server(s, flags=Flags.ACK))

    def test_syn_sent_needs_ack(self):
        ccfg, _ = configs(Mode.PLAIN)
        c, _ = protocol.client_start(ccfg, CONN, random.Random(0), ISN_C)
        rst = Segment(CONN.server_ip, CONN.client_ip, CONN.server_port, CONN.client_port,
                      flags=Flags.RST, ack=c.snd_nxt)
        assert not protocol.on_rst(c, rst)
        assert protocol.on_rst(c, dataclasses.replace(rst, flags=Flags.RST | Flags.ACK))
        assert c.state is State.RESET

    def test_after_reset_nothing_is_accepted(self):
        c, s, ccfg, scfg, *_ = handshake(Mode.PLAIN)
        protocol.on_rst(s, self._rst_to_server(s))
        seg = protocol.send_data(c, ccfg, b"late")[0]
        assert protocol.recv_data(s, scfg, seg).kind is ReceiptKind.REJECTED


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"window": 0}, {"dh_prime_bits": 3}, {"rcv_window": 0xFFFF},
        {"fixed_dh": (96, 5, 1, 2)}, {"fixed_dh": (97, 5, 0, 2)}, {"fixed_dh": (97, 5, 1, 97)},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SecureConfig(Mode.SECURED, **kw)

    def test_mode_from_string(self):
        assert SecureConfig("plain").mode is Mode.PLAIN
        with pytest.raises(ValueError):
            SecureConfig("tls")

    def test_public_key_filled_from_pair(self):
        assert SecureConfig(server_keys=KEYS).server_public == KEYS.public
