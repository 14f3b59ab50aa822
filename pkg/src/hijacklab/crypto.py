"""Number-theoretic and hashing primitives for the hardened handshake.

Everything here is textbook (no padding, no constant-time arithmetic). It
is meant for reproducing a laboratory experiment and must not be used to
protect real traffic.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

BLOCK_SIZE = 64
DIGEST_SIZE = 20
MILLER_RABIN_ROUNDS = 32
SMALL_LIMIT = 1 << 16


class CryptoError(ValueError):
    """Base class for the errors raised by this module."""


class DomainError(CryptoError):
    pass


class BlockTooLarge(CryptoError):
    pass


class PayloadParseError(CryptoError):
    pass


@dataclass(frozen=True)
class DhParams:
    p: int
    g: int

    def __post_init__(self):
        if not is_probable_prime(self.p):
            raise DomainError(f"DH modulus {self.p} is not prime")
        if not 1 < self.g < self.p:
            raise DomainError(f"generator {self.g} outside (1, {self.p})")


@dataclass(frozen=True)
class RsaPublicKey:
    n: int
    e: int


@dataclass(frozen=True)
class RsaPrivateKey:
    n: int
    d: int


@dataclass(frozen=True)
class RsaKeyPair:
    public: RsaPublicKey
    private: RsaPrivateKey

    def __iter__(self):
        yield self.public
        yield self.private


def mod_pow(base: int, exp: int, modulus: int) -> int:
    """Left-to-right square-and-multiply; O(log exp) multiplications."""
    if modulus < 1:
        raise DomainError("modulus must be >= 1")
    if exp < 0 or base < 0:
        raise DomainError("base and exponent must be non-negative")
    if modulus == 1:
        return 0
    result = 1
    base %= modulus
    for bit in bin(exp)[2:]:
        result = result * result % modulus
        if bit == "1":
            result = result * base % modulus
    return result


def _mr_witness(a: int, d: int, s: int, n: int) -> bool:
    """True when `a` proves `n` composite."""
    x = pow(a, d, n)
    if x == 1 or x == n - 1:
        return False
    for _ in range(s - 1):
        x = x * x % n
        if x == n - 1:
            return False
    return True


def is_probable_prime(n: int, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Primality test.

    Trial division decides every n below 2**16 exactly. Larger n go through
    Miller-Rabin with `rounds` bases drawn from a generator seeded by n
    itself, so the answer is a pure function of the arguments.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if n < 2:
        return False
    if n < SMALL_LIMIT:
        if n % 2 == 0:
            return n == 2
        f = 3
        while f * f <= n:
            if n % f == 0:
                return False
            f += 2
        return True
    if n % 2 == 0:
        return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    bases = random.Random(n)
    for _ in range(rounds):
        a = bases.randrange(2, n - 1)
        if _mr_witness(a, d, s, n):
            return False
    return True


def generate_prime(bits: int, rng: random.Random) -> int:
    """Return a probable prime with exactly `bits` bits, both top bits set."""
    if bits < 4:
        raise ValueError("bits must be >= 4")
    top = (1 << (bits - 1)) | (1 << (bits - 2))
    while True:
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate):
            return candidate


def _egcd(a: int, b: int) -> tuple[int, int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def mod_inverse(a: int, m: int) -> int:
    g, x, _ = _egcd(a % m, m)
    if g != 1:
        raise DomainError(f"{a} has no inverse modulo {m}")
    return x % m


def rsa_keypair_from_primes(p: int, q: int, e: int) -> RsaKeyPair:
    # d is reduced modulo phi(n), not lambda(n)
    if p == q:
        raise DomainError("p and q must differ")
    phi = (p - 1) * (q - 1)
    d = mod_inverse(e, phi)
    n = p * q
    return RsaKeyPair(RsaPublicKey(n, e), RsaPrivateKey(n, d))


def rsa_keygen(bits: int, e: int, rng: random.Random, max_attempts: int = 10_000) -> RsaKeyPair:
    if bits < 8:
        raise ValueError("bits must be >= 8")
    if e < 3 or e % 2 == 0:
        raise ValueError("e must be odd and >= 3")
    half = bits // 2
    # tiny sizes can make gcd(e, phi) = 1 unreachable, e.g. 8 bits with e = 3
    for _ in range(max_attempts):
        p = generate_prime(half, rng)
        q = generate_prime(bits - half, rng)
        if p == q:
            continue
        if _egcd(e, (p - 1) * (q - 1))[0] != 1:
            continue
        return rsa_keypair_from_primes(p, q, e)
    raise DomainError(f"no {bits}-bit modulus compatible with e={e} after {max_attempts} attempts")


def _check_block(value: int, n: int) -> None:
    if not 0 <= value < n:
        raise BlockTooLarge(f"block {value} does not fit modulus of {n.bit_length()} bits")


def rsa_encrypt(pub: RsaPublicKey, m: int) -> int:
    _check_block(m, pub.n)
    return mod_pow(m, pub.e, pub.n)


def rsa_decrypt(priv: RsaPrivateKey, c: int) -> int:
    _check_block(c, priv.n)
    return mod_pow(c, priv.d, priv.n)


def rsa_sign_recoverable(priv: RsaPrivateKey, m: int) -> int:
    """Message-recovering signature s = m^d mod n."""
    _check_block(m, priv.n)
    return mod_pow(m, priv.d, priv.n)


def rsa_recover(pub: RsaPublicKey, s: int) -> int:
    _check_block(s, pub.n)
    return mod_pow(s, pub.e, pub.n)


def sha1(data: bytes) -> bytes:
    return hashlib.sha1(data).digest()


_IPAD = bytes(x ^ 0x36 for x in range(256))
_OPAD = bytes(x ^ 0x5C for x in range(256))


@lru_cache(maxsize=64)
def _hmac_states(key: bytes):
    if len(key) > BLOCK_SIZE:
        key = sha1(key)
    key = key.ljust(BLOCK_SIZE, b"\x00")
    return hashlib.sha1(key.translate(_IPAD)), hashlib.sha1(key.translate(_OPAD))


def hmac_sha1(key: bytes, msg: bytes) -> bytes:
    """HMAC over SHA-1 with the 64-byte block construction; long keys are hashed first."""
    inner_start, outer_start = _hmac_states(bytes(key))
    inner = inner_start.copy()
    inner.update(msg)
    outer = outer_start.copy()
    outer.update(inner.digest())
    return outer.digest()


def encode_session_key(k: int) -> bytes:
    """HMAC key bytes for a DH session key: its decimal ASCII rendering."""
    if k < 0:
        raise DomainError("session key must be non-negative")
    return str(k).encode("ascii")


def dh_public(params: DhParams, x: int) -> int:
    if not 1 <= x < params.p:
        raise DomainError(f"private exponent {x} outside [1, {params.p})")
    return mod_pow(params.g, x, params.p)


def dh_shared(params: DhParams, peer_public: int, x: int) -> int:
    if not 1 <= x < params.p:
        raise DomainError(f"private exponent {x} outside [1, {params.p})")
    if not 1 <= peer_public < params.p:
        raise DomainError(f"peer public value {peer_public} outside [1, {params.p})")
    return mod_pow(peer_public, x, params.p)


def int_to_bytes(value: int, length: int | None = None) -> bytes:
    if length is None:
        length = max(1, (value.bit_length() + 7) // 8)
    return value.to_bytes(length, "big")


def int_from_bytes(data: bytes) -> int:
    return int.from_bytes(data, "big")


def modulus_bytes(n: int) -> int:
    return (n.bit_length() + 7) // 8


def encode_handshake_payload(p: int, g: int, yc: int) -> int:
    """Render ``p$g$yc`` in decimal ASCII and read it as a big-endian integer."""
    for v in (p, g, yc):
        if v < 0:
            raise DomainError("handshake fields must be non-negative")
    return int_from_bytes(f"{p}${g}${yc}".encode("ascii"))


def decode_handshake_payload(m: int) -> tuple[int, int, int]:
    raw = int_to_bytes(m)
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise PayloadParseError("payload is not ASCII") from None
    fields = text.split("$")
    if len(fields) != 3:
        raise PayloadParseError(f"expected 3 fields, got {len(fields)}")
    for f in fields:
        # str.isdigit accepts superscripts etc.; restrict to 0-9
        if not f or any(c not in "0123456789" for c in f):
            raise PayloadParseError(f"bad field {f!r}")
    p, g, yc = (int(f) for f in fields)
    return p, g, yc


# key files: one ``name=<decimal>`` per line


def format_public_key(pub: RsaPublicKey) -> str:
    return f"n={pub.n}\ne={pub.e}\n"


def format_private_key(pub: RsaPublicKey, priv: RsaPrivateKey) -> str:
    return f"n={priv.n}\ne={pub.e}\nd={priv.d}\n"


def _parse_fields(text: str) -> dict[str, int]:
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep or not value.isdecimal():
            raise CryptoError(f"line {lineno}: expected name=<digits>, got {line!r}")
        fields[name.strip()] = int(value)
    return fields


def parse_public_key(text: str) -> RsaPublicKey:
    f = _parse_fields(text)
    try:
        return RsaPublicKey(f["n"], f["e"])
    except KeyError as exc:
        raise CryptoError(f"missing field {exc.args[0]}") from None


def parse_private_key(text: str) -> RsaKeyPair:
    f = _parse_fields(text)
    try:
        return RsaKeyPair(RsaPublicKey(f["n"], f["e"]), RsaPrivateKey(f["n"], f["d"]))
    except KeyError as exc:
        raise CryptoError(f"missing field {exc.args[0]}") from None


def write_key_files(pair: RsaKeyPair, prefix: str | Path) -> tuple[Path, Path]:
    prefix = Path(prefix)
    pub_path = prefix.with_name(prefix.name + ".pub")
    key_path = prefix.with_name(prefix.name + ".key")
    pub_path.write_text(format_public_key(pair.public))
    key_path.write_text(format_private_key(pair.public, pair.private))
    return pub_path, key_path


def read_public_key(path: str | Path) -> RsaPublicKey:
    return parse_public_key(Path(path).read_text())


def read_private_key(path: str | Path) -> RsaKeyPair:
    return parse_private_key(Path(path).read_text())


_demo_keys: dict[tuple[int, int], RsaKeyPair] = {}


def demo_keypair(seed: int = 0, bits: int = 512) -> RsaKeyPair:
    """Deterministic stand-in for the out-of-band server certificate."""
    key = (seed, bits)
    if key not in _demo_keys:
        _demo_keys[key] = rsa_keygen(bits, 65537, random.Random(f"server-key:{seed}:{bits}"))
    return _demo_keys[key]
