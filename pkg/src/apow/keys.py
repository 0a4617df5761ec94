"""Ed25519 keys used for v-block seals and as ledger payment addresses.

An address is the hex encoding of a 32-byte Ed25519 public key. Ed25519
signatures are deterministic, so seeded keys give reproducible seals.
"""
from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


class KeyPair:
    def __init__(self, private_key: Ed25519PrivateKey):
        self._sk = private_key
        self.public = private_key.public_key().public_bytes(_RAW, _RAW_PUB)

    @classmethod
    def from_seed(cls, seed: bytes | str) -> "KeyPair":
        if isinstance(seed, str):
            seed = seed.encode()
        return cls(Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"apow-key" + seed).digest()))

    @property
    def address(self) -> str:
        return self.public.hex()

    def sign(self, message: bytes) -> bytes:
        return self._sk.sign(message)

    def __repr__(self) -> str:
        return f"KeyPair({self.address[:16]}...)"


def load_public_key(public: bytes) -> Ed25519PublicKey | None:
    if len(public) != 32:
        return None
    try:
        return Ed25519PublicKey.from_public_bytes(public)
    except ValueError:
        return None


def is_valid_address(address: str) -> bool:
    if not isinstance(address, str) or len(address) != 64:
        return False
    try:
        raw = bytes.fromhex(address)
    except ValueError:
        return False
    return load_public_key(raw) is not None


def address_key(address: str) -> bytes | None:
    return bytes.fromhex(address) if is_valid_address(address) else None


def verify_signature(public: bytes, signature: bytes, message: bytes) -> bool:
    key = load_public_key(public)
    if key is None:
        return False
    try:
        key.verify(signature, message)
    except InvalidSignature:
        return False
    return True
