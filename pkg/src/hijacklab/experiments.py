"""Scenario runners behind the command line: handshake demo and window sweep."""

from __future__ import annotations

import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import crypto
from .attacker import LAB_CLIENT, DEFAULT_COMMAND, LAB_SERVER, honest_payload, run_hijack
from .crypto import RsaKeyPair
from .hosts import ClientHost, ServerHost
from .netsim import SimNet, SimulationError
from .protocol import Mode, SecureConfig
from .segment import ConnectionId

SWEEP_COLUMNS = ("window", "trials", "hmac_computations", "mean_exposure",
                 "max_exposure", "detection_rate", "elapsed_ms")


@dataclass
class HandshakeResult:
    p: int
    g: int
    client_private: int
    server_private: int
    client_public: int
    server_public: int
    client_key: int
    server_key: int
    hmac_hex: str
    rsa_public: crypto.RsaPublicKey
    syn_payload: bytes
    synack_payload: bytes
    net: SimNet

    def lines(self) -> list[str]:
        return [
            f"RSA S+: (n={self.rsa_public.n}, e={self.rsa_public.e})",
            f"p={self.p} g={self.g}",
            f"client: XC={self.client_private} YC={self.client_public} K={self.client_key}",
            f"server: XS={self.server_private} YS={self.server_public} K={self.server_key}",
            f"C (SYN payload)     = {self.syn_payload.hex()}",
            f"S (SYN|ACK payload) = {self.synack_payload.hex()}",
            f"HMAC = {self.hmac_hex}",
        ]


def run_handshake(*, p: int | None = None, g: int | None = None, xc: int | None = None,
                  xs: int | None = None, bits: int = 32, seed: int = 0,
                  rsa_bits: int = 512, auth_message: bytes = b"message",
                  keys: RsaKeyPair | None = None) -> HandshakeResult:
    """Drive only the three secured handshake segments over a fresh link."""
    fixed = None
    if p is not None:
        if None in (g, xc, xs):
            raise ValueError("p, g, xc and xs must be given together")
        fixed = (p, g, xc, xs)
    keys = keys or crypto.demo_keypair(seed, rsa_bits)
    ccfg = SecureConfig(Mode.SECURED, fixed_dh=fixed, dh_prime_bits=bits,
                        auth_message=auth_message, server_public=keys.public, ttl=128)
    scfg = SecureConfig(Mode.SECURED, fixed_dh=fixed, dh_prime_bits=bits,
                        auth_message=auth_message, server_keys=keys)
    net = SimNet()
    net.add_host("client", LAB_CLIENT[0])
    net.add_host("server", LAB_SERVER[0])
    client = ClientHost("client", net, ccfg, random.Random(f"{seed}:client"))
    server = ServerHost("server", net, scfg, random.Random(f"{seed}:server"))
    client.connect(ConnectionId(*LAB_CLIENT, *LAB_SERVER))
    net.run_until_idle({"client": client, "server": server})
    if not (client.active and server.active):
        raise SimulationError(f"handshake failed: client {client.state.name}, server {server.state.name}")
    sent = [ev.segment for ev in net.transcript if ev.kind == "sent"]
    cdh, sdh = client.session.dh, server.session.dh
    return HandshakeResult(
        p=cdh.params.p, g=cdh.params.g,
        client_private=cdh.private, server_private=sdh.private,
        client_public=cdh.public, server_public=sdh.public,
        client_key=client.session.session_key, server_key=server.session.session_key,
        hmac_hex=sent[2].payload.hex(),
        rsa_public=keys.public,
        syn_payload=sent[0].payload, synack_payload=sent[1].payload,
        net=net,
    )


@dataclass
class SweepRow:
    window: int
    trials: int
    hmac_computations: int
    mean_exposure: float
    max_exposure: int
    detection_rate: float
    elapsed_ms: float

    def as_csv(self) -> str:
        return (f"{self.window},{self.trials},{self.hmac_computations},"
                f"{self.mean_exposure:.4f},{self.max_exposure},{self.detection_rate:.4f},"
                f"{self.elapsed_ms:.1f}")


def overhead_run(window: int, packets: int, seed: int = 0,
                 keys: RsaKeyPair | None = None) -> tuple[int, int]:
    """Unmolested secured transfer of `packets` segments, closed by a flush.

    Returns the HMAC computations on the sending side and on the receiving
    side of the client-to-server direction.
    """
    keys = keys or crypto.demo_keypair(seed)
    ccfg = SecureConfig(Mode.SECURED, window=window, server_public=keys.public)
    scfg = SecureConfig(Mode.SECURED, window=window, server_keys=keys)
    net = SimNet()
    net.add_host("client", LAB_CLIENT[0])
    net.add_host("server", LAB_SERVER[0])
    client = ClientHost("client", net, ccfg, random.Random(f"{seed}:client"))
    server = ServerHost("server", net, scfg, random.Random(f"{seed}:server"))
    drivers = {"client": client, "server": server}
    client.connect(ConnectionId(*LAB_CLIENT, *LAB_SERVER))
    net.run_until_idle(drivers)
    for i in range(packets):
        client.send(honest_payload(i))
    client.flush()
    net.run_until_idle(drivers)
    if not server.active or server.session.held is not None:
        raise SimulationError("honest transfer did not verify cleanly")
    return (client.session.send_verifier.computations,
            server.session.recv_verifier.computations)


def _trial(args) -> tuple[bool, int]:
    window, honest, seed, keys = args
    r = run_hijack(Mode.SECURED, DEFAULT_COMMAND, seed, window=window,
                   honest_packets=honest, server_keys=keys)
    detected = r.detected_at_checkpoint is not None and r.detected_at_checkpoint == r.injected_window
    return detected, r.forged_accepted_before_detection


def injection_points(packets: int, inject_at: int | None, trials: int, seed: int,
                     window: int) -> list[int]:
    if inject_at is not None:
        return [inject_at] * trials
    rng = random.Random(f"sweep:{seed}:{window}")
    return [rng.randrange(packets) for _ in range(trials)]


def window_sweep(windows=(1, 10, 100, 1000), packets: int = 10_000,
                 inject_at: int | None = None, trials: int = 5, seed: int = 0,
                 workers: int = 1, timing: bool = True) -> list[SweepRow]:
    """HMAC overhead against attacker exposure for each window value.

    `inject_at` is the number of honest segments sent before the attack;
    None draws it uniformly from [0, packets) per trial.
    """
    if any(w < 1 for w in windows):
        raise ValueError("window values must be >= 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if inject_at is not None and not 0 <= inject_at <= packets:
        raise ValueError("inject_at must lie in [0, packets]")
    keys = crypto.demo_keypair(seed)
    rows = []
    for w in windows:
        start = time.perf_counter()
        sent, verified = overhead_run(w, packets, seed, keys)
        elapsed = (time.perf_counter() - start) * 1000 if timing else 0.0
        if sent != verified:
            raise SimulationError(f"sender computed {sent} HMACs, receiver {verified}")
        jobs = [(w, k, seed * 1_000_003 + t, keys)
                for t, k in enumerate(injection_points(packets, inject_at, trials, seed, w))]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_trial, jobs))
        else:
            results = [_trial(j) for j in jobs]
        exposures = [e for _, e in results]
        rows.append(SweepRow(
            window=w,
            trials=trials,
            hmac_computations=sent,
            mean_exposure=sum(exposures) / len(exposures),
            max_exposure=max(exposures),
            detection_rate=sum(d for d, _ in results) / len(results),
            elapsed_ms=elapsed,
        ))
    return rows


def expected_checkpoints(packets: int, window: int) -> int:
    return math.ceil(packets / window)
