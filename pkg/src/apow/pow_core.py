"""Hashing primitives, prefix patterns and nonce scanning.

A digest is a plain 32-byte ``bytes`` value. Patterns are compared against
the leading bits of a digest; since the digest is big-endian, "the first d
bits equal p" is the same as ``lo <= digest < hi`` for a pair of 32-byte
bounds, which lets the scan loops do the test with two bytes comparisons.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

DIGEST_BITS = 256
DIGEST_BYTES = DIGEST_BITS // 8
NONCE_BITS = 64
NONCE_MAX = (1 << NONCE_BITS) - 1

SHA256D = "sha256d"
SHA256 = "sha256"
HASH_SCHEMES = (SHA256D, SHA256)
DEFAULT_SCHEME = SHA256D

Digest = bytes
Hit = tuple[int, bytes]


def _check_scheme(scheme: str) -> None:
    if scheme not in HASH_SCHEMES:
        raise ValueError(f"unknown hash scheme {scheme!r}")


def hash_digest(message: bytes, scheme: str = DEFAULT_SCHEME) -> Digest:
    """Hash a message; double SHA-256 by default, as Bitcoin does."""
    _check_scheme(scheme)
    d = hashlib.sha256(message).digest()
    if scheme == SHA256D:
        d = hashlib.sha256(d).digest()
    return d


@dataclass(frozen=True)
class BitPattern:
    """The leading ``length`` bits of a digest, stored as an integer."""

    value: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= DIGEST_BITS:
            raise ValueError(f"pattern length {self.length} outside [0, {DIGEST_BITS}]")
        if not 0 <= self.value < (1 << self.length):
            raise ValueError(f"pattern value does not fit in {self.length} bits")

    @classmethod
    def zeros(cls, length: int) -> "BitPattern":
        return cls(0, length)

    @classmethod
    def from_digest(cls, digest: bytes, length: int) -> "BitPattern":
        if not 0 <= length <= len(digest) * 8:
            raise ValueError(f"cannot take {length} bits of a {len(digest) * 8}-bit digest")
        return cls(int.from_bytes(digest, "big") >> (len(digest) * 8 - length), length)

    @classmethod
    def from_bits(cls, bits: str) -> "BitPattern":
        bits = bits.replace("_", "")
        if bits and set(bits) - {"0", "1"}:
            raise ValueError(f"not a bit string: {bits!r}")
        return cls(int(bits, 2) if bits else 0, len(bits))

    @property
    def bits(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    @property
    def pattern_id(self) -> str:
        width = (self.length + 3) // 4
        return f"{self.length}:{self.value:0{width}x}" if self.length else "0:"

    @classmethod
    def from_id(cls, pid: str) -> "BitPattern":
        length, _, value = pid.partition(":")
        return cls(int(value, 16) if value else 0, int(length))

    def prefix(self, k: int) -> "BitPattern":
        """Leading ``k`` bits of this pattern."""
        if not 0 <= k <= self.length:
            raise ValueError(f"prefix length {k} outside [0, {self.length}]")
        return BitPattern(self.value >> (self.length - k), k)

    def is_prefix_of(self, other: "BitPattern") -> bool:
        return self.length <= other.length and other.prefix(self.length) == self

    def bounds(self) -> tuple[bytes, bytes | None]:
        """Byte bounds ``lo <= digest < hi``; ``hi`` is None when unbounded."""
        shift = DIGEST_BITS - self.length
        lo = (self.value << shift).to_bytes(DIGEST_BYTES, "big")
        top = (self.value + 1) << shift
        hi = None if top >> DIGEST_BITS else top.to_bytes(DIGEST_BYTES, "big")
        return lo, hi

    def __str__(self) -> str:
        return self.bits or "<empty>"


@dataclass(frozen=True)
class NonceRange:
    """Inclusive interval of nonces."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end <= NONCE_MAX:
            raise ValueError(f"invalid nonce range [{self.start}, {self.end}]")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def __contains__(self, nonce: int) -> bool:
        return self.start <= nonce <= self.end

    def __iter__(self):
        return iter(range(self.start, self.end + 1))

    def split(self, mid: int) -> tuple["NonceRange", "NonceRange"]:
        """``[start, mid]`` and ``[mid + 1, end]``."""
        return NonceRange(self.start, mid), NonceRange(mid + 1, self.end)


@dataclass(frozen=True)
class FineTarget:
    """Maximum absolute distance between a truncated digest and its pattern."""

    value: int = 0
    enabled: bool = False


def embed_message(template, nonce: int, nonce_bits: int = NONCE_BITS) -> bytes:
    """``serialize(template) || nonce`` with the nonce as a big-endian integer."""
    if nonce_bits % 8:
        raise ValueError("nonce width must be a whole number of bytes")
    if not 0 <= nonce < (1 << nonce_bits):
        raise OverflowError(f"nonce {nonce} does not fit in {nonce_bits} bits")
    return template.serialize() + nonce.to_bytes(nonce_bits // 8, "big")


def pow_digest(template, nonce: int, scheme: str = DEFAULT_SCHEME) -> Digest:
    return hash_digest(embed_message(template, nonce), scheme)


def derive_b2(prev_block_id: bytes, d: int, scheme: str = DEFAULT_SCHEME) -> BitPattern:
    """Productive pattern for height j: first d bits of H(id of block j-1)."""
    if not 0 <= d <= DIGEST_BITS:
        raise ValueError(f"pattern length {d} exceeds digest length")
    return BitPattern.from_digest(hash_digest(prev_block_id, scheme), d)


def matches_prefix(digest: bytes, pattern: BitPattern) -> bool:
    if pattern.length == 0:
        return True
    return BitPattern.from_digest(digest, pattern.length) == pattern


def fine_distance_ok(digest: bytes, pattern: BitPattern, target: FineTarget | None) -> bool:
    """Absolute (non-wrapping) distance test; plain prefix match when disabled."""
    if target is None or not target.enabled:
        return matches_prefix(digest, pattern)
    if pattern.length == 0:
        raise ValueError("a fine target needs a non-empty pattern")
    if not 0 <= target.value < (1 << pattern.length):
        raise ValueError("fine target does not fit in the pattern width")
    truncated = BitPattern.from_digest(digest, pattern.length).value
    return abs(truncated - pattern.value) <= target.value


def scan(template, nonces: NonceRange, patterns: Sequence[BitPattern],
         scheme: str = DEFAULT_SCHEME) -> list[list[Hit]]:
    """One pass over ``nonces``; returns, per pattern, the ascending hits.

    Each nonce is hashed once and tested against every pattern.
    """
    _check_scheme(scheme)
    base = hashlib.sha256(template.serialize())
    sha = hashlib.sha256
    double = scheme == SHA256D
    out: list[list[Hit]] = [[] for _ in patterns]
    bounds = [p.bounds() for p in patterns]
    top = b"\xff" * DIGEST_BYTES + b"\x00"
    checks = [(lo, hi if hi is not None else top, out[k]) for k, (lo, hi) in enumerate(bounds)]

    if len(checks) == 1:
        lo, hi, hits = checks[0]
        for n in range(nonces.start, nonces.end + 1):
            h = base.copy()
            h.update(n.to_bytes(8, "big"))
            x = h.digest()
            if double:
                x = sha(x).digest()
            if lo <= x < hi:
                hits.append((n, x))
        return out

    if len(checks) == 2:
        (lo1, hi1, hits1), (lo2, hi2, hits2) = checks
        for n in range(nonces.start, nonces.end + 1):
            h = base.copy()
            h.update(n.to_bytes(8, "big"))
            x = h.digest()
            if double:
                x = sha(x).digest()
            if lo1 <= x < hi1:
                hits1.append((n, x))
            if lo2 <= x < hi2:
                hits2.append((n, x))
        return out

    for n in range(nonces.start, nonces.end + 1):
        h = base.copy()
        h.update(n.to_bytes(8, "big"))
        x = h.digest()
        if double:
            x = sha(x).digest()
        for lo, hi, hits in checks:
            if lo <= x < hi:
                hits.append((n, x))
    return out


def pattern_scan(template, nonces: NonceRange, pattern: BitPattern,
                 scheme: str = DEFAULT_SCHEME) -> list[Hit]:
    """All nonces in range whose digest starts with ``pattern``."""
    return scan(template, nonces, [pattern], scheme)[0]


def mine_scan(template, nonces: NonceRange, d: int, scheme: str = DEFAULT_SCHEME) -> list[Hit]:
    """Exhaustive search for digests with ``d`` leading zero bits."""
    return pattern_scan(template, nonces, BitPattern.zeros(d), scheme)


def vmine_scan(template, nonces: NonceRange, b1: BitPattern, b2: BitPattern,
               scheme: str = DEFAULT_SCHEME) -> tuple[list[Hit], list[Hit]]:
    """Dual-predicate scan; returns ``(share_hits on b2, audit_hits on b1)``."""
    if b1.length != b2.length:
        raise ValueError(f"pattern lengths differ: {b1.length} != {b2.length}")
    audit, shares = scan(template, nonces, [b1, b2], scheme)
    return shares, audit


def first_hit(template, pattern: BitPattern, start: int = 0, scheme: str = DEFAULT_SCHEME,
              chunk: int = 4096) -> Hit:
    """Lowest nonce >= start matching ``pattern``."""
    n = start
    while n <= NONCE_MAX:
        end = min(n + chunk - 1, NONCE_MAX)
        hits = pattern_scan(template, NonceRange(n, end), pattern, scheme)
        if hits:
            return hits[0]
        n = end + 1
    raise RuntimeError("nonce space exhausted")


def merge_hits(parts: Iterable[list[Hit]]) -> list[Hit]:
    """Concatenate hit lists from consecutive sub-ranges, keeping nonce order."""
    merged: list[Hit] = []
    for part in parts:
        if merged and part and part[0][0] <= merged[-1][0]:
            raise ValueError("sub-range results are not in ascending order")
        merged.extend(part)
    return merged
