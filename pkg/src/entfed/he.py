"""Additively homomorphic encryption for codebook vectors (Paillier scheme).

Only ciphertext addition and plaintext scaling are needed by the aggregation
path, so any additive public-key scheme honouring this module's surface can
replace Paillier. Real numbers travel as fixed-point integers: ``round(v * scale)``,
negatives wrapped modulo ``n``. Weighted sums record the total weight as a
divisor that is applied only when a key holder decodes.

Security parameter: ``lam`` is the modulus size in bits. 1024 is the default;
512 is accepted for fast tests and is NOT secure.
"""

from __future__ import annotations

import base64
import hashlib
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path

import gmpy2
from gmpy2 import mpz

from .errors import (ContractError, DecodeError, KeyMismatchError,
                     PlaintextOverflowError, ScaleMismatchError)

SUPPORTED_LAMBDA = (512, 1024, 2048)
DEFAULT_SCALE = 10 ** 6
# headroom reserved above encodable values so weighted sums cannot wrap
_HEADROOM_BITS = 64
# decrypted residues beyond this fraction of n are treated as garbage
_VALID_BITS_MARGIN = 32


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def bits(self) -> int:
        return int(self.n).bit_length()

    @property
    def ciphertext_bytes(self) -> int:
        return (self.nsquare.bit_length() + 7) // 8

    @property
    def fingerprint(self) -> str:
        return _fingerprint(self.n).hex()

    @property
    def encode_bound(self) -> int:
        return self.n >> _HEADROOM_BITS


@dataclass(frozen=True)
class PrivateKey:
    public: PublicKey
    p: int
    q: int
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def _crt(self):
        if not self._cache:
            p, q = mpz(self.p), mpz(self.q)
            n = p * q
            g = mpz(self.public.g)
            psq, qsq = p * p, q * q
            hp = gmpy2.invert((gmpy2.powmod(g, p - 1, psq) - 1) // p, p)
            hq = gmpy2.invert((gmpy2.powmod(g, q - 1, qsq) - 1) // q, q)
            self._cache.update(p=p, q=q, psq=psq, qsq=qsq, hp=hp, hq=hq,
                               qinv=gmpy2.invert(q, p), n=n)
        return self._cache


@dataclass(frozen=True)
class KeyPair:
    pk: PublicKey
    sk: PrivateKey
    lam: int


@dataclass(frozen=True)
class CiphertextVector:
    """Slotwise ciphertexts plus fixed-point bookkeeping.

    Decoded plaintext per slot is ``m / (scale * divisor)``.
    """

    modulus: int
    values: tuple
    scale: int = DEFAULT_SCALE
    divisor: int = 1

    def __len__(self):
        return len(self.values)

    def to_bytes(self) -> bytes:
        """Wire form: key fingerprint, scale, divisor, slot count, then the slots."""
        width = ((self.modulus * self.modulus).bit_length() + 7) // 8
        out = [_fingerprint(self.modulus), _lp(_int_bytes(self.scale)),
               _lp(_int_bytes(self.divisor)), struct.pack(">I", len(self.values))]
        out.extend(_lp(int(c).to_bytes(width, "big")) for c in self.values)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw: bytes, pk: "PublicKey") -> "CiphertextVector":
        if raw[:FINGERPRINT_BYTES] != _fingerprint(pk.n):
            raise KeyMismatchError("ciphertext vector was serialized under another public key")
        pos = FINGERPRINT_BYTES
        scale, pos = _read_lp(raw, pos)
        divisor, pos = _read_lp(raw, pos)
        if pos + 4 > len(raw):
            raise DecodeError("ciphertext vector truncated")
        (count,) = struct.unpack(">I", raw[pos:pos + 4])
        pos += 4
        n2 = pk.nsquare
        vals = []
        for _ in range(count):
            chunk, pos = _read_lp(raw, pos)
            c = int.from_bytes(chunk, "big")
            if not 0 < c < n2:
                raise DecodeError("ciphertext outside the key's range")
            vals.append(mpz(c))
        if pos != len(raw):
            raise DecodeError("trailing bytes after ciphertext vector")
        return cls(pk.n, tuple(vals), int.from_bytes(scale, "big"), int.from_bytes(divisor, "big"))


FINGERPRINT_BYTES = 8


def _fingerprint(n: int) -> bytes:
    return hashlib.sha256(_int_bytes(n)).digest()[:FINGERPRINT_BYTES]


def _int_bytes(x: int) -> bytes:
    x = int(x)
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")


def _lp(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def _read_lp(raw: bytes, pos: int):
    if pos + 4 > len(raw):
        raise DecodeError("length prefix truncated")
    (ln,) = struct.unpack(">I", raw[pos:pos + 4])
    pos += 4
    if pos + ln > len(raw):
        raise DecodeError("length-prefixed field truncated")
    return raw[pos:pos + ln], pos + ln


def _prime(bits: int, rng) -> mpz:
    while True:
        cand = mpz(rng.getrandbits(bits)) | (mpz(3) << (bits - 2)) | 1
        p = gmpy2.next_prime(cand)
        if p.bit_length() == bits:
            return p


def keygen(lam: int = 1024, rng=None) -> KeyPair:
    """Generate a Paillier key pair with an ``lam``-bit modulus.

    ``rng`` is any object with ``getrandbits``; the default is the OS CSPRNG.
    Passing a seeded ``random.Random`` makes simulations reproducible.
    """
    if lam not in SUPPORTED_LAMBDA:
        raise ContractError(f"unsupported security parameter {lam}; use one of {SUPPORTED_LAMBDA}")
    rng = rng or random.SystemRandom()
    half = lam // 2
    while True:
        p, q = _prime(half, rng), _prime(half, rng)
        if p != q and (p * q).bit_length() == lam and gmpy2.gcd(p * q, (p - 1) * (q - 1)) == 1:
            break
    n = p * q
    pk = PublicKey(int(n), int(n + 1))
    return KeyPair(pk, PrivateKey(pk, int(p), int(q)), lam)


def encode_fixed(values, scale: int = DEFAULT_SCALE, bound: int | None = None) -> list[int]:
    out = []
    for v in values:
        m = int(round(float(v) * scale))
        if bound is not None and abs(m) >= bound:
            raise PlaintextOverflowError(f"value {v} at scale {scale} exceeds the plaintext bound")
        out.append(m)
    return out


def decode_fixed(ints, scale: int = DEFAULT_SCALE, divisor: int = 1) -> list[float]:
    den = scale * divisor
    return [int(m) / den for m in ints]


def _encrypt_int(pk: PublicKey, m: int, rng) -> mpz:
    n, n2 = mpz(pk.n), mpz(pk.nsquare)
    while True:
        r = mpz(rng.getrandbits(pk.bits)) % n
        if r > 0 and gmpy2.gcd(r, n) == 1:
            break
    # g = n + 1, so g^m = 1 + m*n (mod n^2)
    gm = (1 + (mpz(m) % n) * n) % n2
    return gm * gmpy2.powmod(r, n, n2) % n2


def _decrypt_int(sk: PrivateKey, c) -> int:
    k = sk._crt()
    c = mpz(c)
    mp = (gmpy2.powmod(c, k["p"] - 1, k["psq"]) - 1) // k["p"] * k["hp"] % k["p"]
    mq = (gmpy2.powmod(c, k["q"] - 1, k["qsq"]) - 1) // k["q"] * k["hq"] % k["q"]
    m = mq + ((mp - mq) * k["qinv"] % k["p"]) * k["q"]
    n = k["n"]
    return int(m - n) if m > n // 2 else int(m)


def enc(pk: PublicKey, values, scale: int = DEFAULT_SCALE, rng=None) -> CiphertextVector:
    """Encrypt a codebook (any iterable of reals) slot by slot."""
    if hasattr(values, "heads"):
        values = values.heads
    rng = rng or random.SystemRandom()
    ints = encode_fixed(values, scale, pk.encode_bound)
    return CiphertextVector(pk.n, tuple(_encrypt_int(pk, m, rng) for m in ints), scale, 1)


def dec(sk: PrivateKey, c: CiphertextVector) -> list[float]:
    if sk.public.n != c.modulus:
        raise KeyMismatchError("ciphertext was produced under a different public key")
    limit = sk.public.n >> _VALID_BITS_MARGIN
    ints = []
    for ct in c.values:
        m = _decrypt_int(sk, ct)
        if abs(m) >= limit:
            raise DecodeError("decrypted value outside the valid plaintext range")
        ints.append(m)
    return decode_fixed(ints, c.scale, c.divisor)


def _check_pair(pk: PublicKey, c1: CiphertextVector, c2: CiphertextVector):
    if c1.modulus != pk.n or c2.modulus != pk.n:
        raise KeyMismatchError("ciphertexts belong to a different public key")
    if c1.scale != c2.scale or c1.divisor != c2.divisor:
        raise ScaleMismatchError("ciphertexts carry different fixed-point bookkeeping")
    if len(c1) != len(c2):
        raise ContractError("ciphertext vectors differ in slot count")


def eval_add(pk: PublicKey, c1: CiphertextVector, c2: CiphertextVector) -> CiphertextVector:
    _check_pair(pk, c1, c2)
    n2 = mpz(pk.nsquare)
    vals = tuple(a * b % n2 for a, b in zip(c1.values, c2.values))
    return CiphertextVector(pk.n, vals, c1.scale, c1.divisor)


def eval_scale(pk: PublicKey, c: CiphertextVector, w: int) -> CiphertextVector:
    """Multiply every slot's plaintext by the integer ``w``."""
    if c.modulus != pk.n:
        raise KeyMismatchError("ciphertext belongs to a different public key")
    if int(w) != w:
        raise ContractError("plaintext scaling needs an integer weight")
    n2 = mpz(pk.nsquare)
    w = int(w)
    if w >= 0:
        vals = tuple(gmpy2.powmod(x, w, n2) for x in c.values)
    else:
        vals = tuple(gmpy2.powmod(gmpy2.invert(x, n2), -w, n2) for x in c.values)
    return CiphertextVector(pk.n, vals, c.scale, c.divisor)


def aggregate_encrypted(pk: PublicKey, updates) -> CiphertextVector:
    """Encrypted weighted sum ``sum_k w_k * c_k`` with divisor ``sum_k w_k``.

    ``updates`` holds ``(CiphertextVector, weight)`` pairs. Needs only the
    public key; the mean is formed when a key holder decodes.
    """
    updates = list(updates)
    if not updates:
        raise ContractError("nothing to aggregate")
    first = updates[0][0]
    total = None
    weight = 0
    for c, w in updates:
        if int(w) <= 0:
            raise ContractError("aggregation weights must be positive integers")
        if c.divisor != 1 or c.scale != first.scale:
            raise ScaleMismatchError("aggregation inputs must share scale and carry no divisor")
        term = eval_scale(pk, c, int(w))
        total = term if total is None else eval_add(pk, total, term)
        weight += int(w)
    return CiphertextVector(pk.n, total.values, total.scale, weight)


def aggregate_selected(pk: PublicKey, updates, selectors) -> CiphertextVector:
    """Weighted sum of chosen slots: output slot ``t`` is ``sum_k w_k * c_k[selectors[k][t]]``.

    Each input is scaled once and the selected slots are combined with
    ciphertext additions, which is cheaper than gathering first when many
    output slots reuse the same input slot. Divisor bookkeeping matches
    :func:`aggregate_encrypted`.
    """
    updates = list(updates)
    selectors = [list(map(int, s)) for s in selectors]
    if not updates:
        raise ContractError("nothing to aggregate")
    if len(selectors) != len(updates) or len({len(s) for s in selectors}) != 1:
        raise ContractError("need one equal-length selector per update")
    first = updates[0][0]
    n2 = mpz(pk.nsquare)
    total = [mpz(1)] * len(selectors[0])
    weight = 0
    for (c, w), sel in zip(updates, selectors):
        if int(w) <= 0:
            raise ContractError("aggregation weights must be positive integers")
        if c.divisor != 1 or c.scale != first.scale:
            raise ScaleMismatchError("aggregation inputs must share scale and carry no divisor")
        if sel and (min(sel) < 0 or max(sel) >= len(c)):
            raise ContractError("selector outside the ciphertext vector")
        scaled = eval_scale(pk, c, int(w)).values
        total = [t * scaled[i] % n2 for t, i in zip(total, sel)]
        weight += int(w)
    return CiphertextVector(pk.n, tuple(total), first.scale, weight)


def save_public_key(pk: PublicKey, path) -> None:
    Path(path).write_text(
        "scheme: paillier\n"
        f"n: {base64.b64encode(_int_bytes(pk.n)).decode()}\n"
        f"g: {base64.b64encode(_int_bytes(pk.g)).decode()}\n"
    )


def load_public_key(path) -> PublicKey:
    kv = _read_kv(path)
    return PublicKey(_b64int(kv["n"]), _b64int(kv["g"]))


def save_private_key(sk: PrivateKey, path) -> None:
    Path(path).write_text(
        "scheme: paillier\n"
        f"n: {base64.b64encode(_int_bytes(sk.public.n)).decode()}\n"
        f"g: {base64.b64encode(_int_bytes(sk.public.g)).decode()}\n"
        f"p: {base64.b64encode(_int_bytes(sk.p)).decode()}\n"
        f"q: {base64.b64encode(_int_bytes(sk.q)).decode()}\n"
    )


def load_private_key(path) -> PrivateKey:
    kv = _read_kv(path)
    pk = PublicKey(_b64int(kv["n"]), _b64int(kv["g"]))
    return PrivateKey(pk, _b64int(kv["p"]), _b64int(kv["q"]))


def _read_kv(path) -> dict:
    kv = {}
    for line in Path(path).read_text().splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            kv[k.strip()] = v.strip()
    return kv


def _b64int(s: str) -> int:
    return int.from_bytes(base64.b64decode(s), "big")
