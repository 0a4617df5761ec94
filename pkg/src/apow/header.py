"""Block template header and its canonical byte encoding."""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from functools import cached_property

from .pow_core import DEFAULT_SCHEME, DIGEST_BYTES, hash_digest

ZERO_DIGEST = bytes(DIGEST_BYTES)

_FIXED = struct.Struct(">I32s32sQQH")
_HAS_AUDITORS_ROOT = 0x01
_HAS_LAST_BLOCK = 0x02


def _digest_field(name: str, value: bytes | None, optional: bool = False) -> None:
    if value is None and optional:
        return
    if not isinstance(value, bytes) or len(value) != DIGEST_BYTES:
        raise ValueError(f"{name} must be {DIGEST_BYTES} bytes")


@dataclass(frozen=True)
class TemplateHeader:
    version: int
    parent: bytes
    txroot: bytes
    height: int
    time: int
    difficulty: int
    pool_address: str
    auditors_root: bytes | None = None
    last_block: bytes | None = None

    def __post_init__(self):
        _digest_field("parent", self.parent)
        _digest_field("txroot", self.txroot)
        _digest_field("auditors_root", self.auditors_root, optional=True)
        _digest_field("last_block", self.last_block, optional=True)
        if self.height < 0:
            raise ValueError("height must be non-negative")
        if not 0 <= self.version < 2**32 or self.time < 0 or not 0 <= self.difficulty < 2**16:
            raise ValueError("header field out of range")

    def serialize(self) -> bytes:
        return self._encoded

    @cached_property
    def _encoded(self) -> bytes:
        addr = self.pool_address.encode("utf-8")
        if len(addr) > 0xFFFF:
            raise ValueError("pool address too long")
        flags = (_HAS_AUDITORS_ROOT if self.auditors_root is not None else 0) | (
            _HAS_LAST_BLOCK if self.last_block is not None else 0
        )
        out = [
            _FIXED.pack(self.version, self.parent, self.txroot, self.height, self.time, self.difficulty),
            struct.pack(">H", len(addr)),
            addr,
            bytes([flags]),
        ]
        if self.auditors_root is not None:
            out.append(self.auditors_root)
        if self.last_block is not None:
            out.append(self.last_block)
        return b"".join(out)

    @classmethod
    def deserialize(cls, data: bytes) -> "TemplateHeader":
        version, parent, txroot, height, time, difficulty = _FIXED.unpack_from(data, 0)
        pos = _FIXED.size
        (alen,) = struct.unpack_from(">H", data, pos)
        pos += 2
        addr = data[pos:pos + alen].decode("utf-8")
        pos += alen
        flags = data[pos]
        pos += 1
        auditors_root = last_block = None
        if flags & _HAS_AUDITORS_ROOT:
            auditors_root, pos = data[pos:pos + DIGEST_BYTES], pos + DIGEST_BYTES
        if flags & _HAS_LAST_BLOCK:
            last_block, pos = data[pos:pos + DIGEST_BYTES], pos + DIGEST_BYTES
        if pos != len(data):
            raise ValueError("trailing bytes after template header")
        return cls(version, parent, txroot, height, time, difficulty, addr, auditors_root, last_block)

    def template_id(self, scheme: str = DEFAULT_SCHEME) -> bytes:
        ids = self.__dict__.setdefault("_ids", {})
        tid = ids.get(scheme)
        if tid is None:
            tid = ids[scheme] = hash_digest(self._encoded, scheme)
        return tid

    def with_time(self, time: int) -> "TemplateHeader":
        return replace(self, time=time)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "parent": self.parent.hex(),
            "txroot": self.txroot.hex(),
            "height": self.height,
            "time": self.time,
            "difficulty": self.difficulty,
            "pool_address": self.pool_address,
            "auditors_root": self.auditors_root.hex() if self.auditors_root else None,
            "last_block": self.last_block.hex() if self.last_block else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateHeader":
        opt = lambda v: bytes.fromhex(v) if v else None  # noqa: E731
        return cls(
            d["version"], bytes.fromhex(d["parent"]), bytes.fromhex(d["txroot"]), d["height"],
            d["time"], d["difficulty"], d["pool_address"], opt(d.get("auditors_root")),
            opt(d.get("last_block")),
        )
