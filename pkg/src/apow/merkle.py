"""Merkle trees over auditor public keys with inclusion proofs.

Hashing follows RFC 6962: leaves are ``sha256(0x00 || data)``, interior
nodes ``sha256(0x01 || left || right)`` and the tree splits at the largest
power of two below the leaf count. The domain separation and the fixed
shape mean a proof binds both the leaf index and the tree size.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

LEFT = "L"
RIGHT = "R"


def leaf_hash(data: bytes) -> bytes:
    return hashlib.sha256(b"\x00" + data).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(b"\x01" + left + right).digest()


def _split(n: int) -> int:
    k = 1
    while k << 1 < n:
        k <<= 1
    return k


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    if not leaves:
        raise ValueError("empty tree")
    if len(leaves) == 1:
        return leaf_hash(leaves[0])
    k = _split(len(leaves))
    return node_hash(merkle_root(leaves[:k]), merkle_root(leaves[k:]))


@dataclass(frozen=True)
class MerkleProof:
    """Inclusion proof; ``path`` runs from the leaf level up.

    Each step is ``(sibling, side)`` with side ``"L"`` when the sibling sits
    to the left of the running hash.
    """

    leaf: bytes
    index: int
    tree_size: int
    path: tuple[tuple[bytes, str], ...]
    root: bytes

    def serialize(self) -> bytes:
        parts = [
            len(self.leaf).to_bytes(2, "big"), self.leaf,
            self.index.to_bytes(8, "big"), self.tree_size.to_bytes(8, "big"),
            len(self.path).to_bytes(2, "big"),
        ]
        for sibling, side in self.path:
            parts += [side.encode(), sibling]
        parts.append(self.root)
        return b"".join(parts)

    def to_dict(self) -> dict:
        return {
            "leaf": self.leaf.hex(), "index": self.index, "tree_size": self.tree_size,
            "path": [[s.hex(), side] for s, side in self.path], "root": self.root.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MerkleProof":
        return cls(
            bytes.fromhex(d["leaf"]), d["index"], d["tree_size"],
            tuple((bytes.fromhex(s), side) for s, side in d["path"]), bytes.fromhex(d["root"]),
        )


def _path(leaves: Sequence[bytes], index: int) -> list[tuple[bytes, str]]:
    if len(leaves) == 1:
        return []
    k = _split(len(leaves))
    if index < k:
        return _path(leaves[:k], index) + [(merkle_root(leaves[k:]), RIGHT)]
    return _path(leaves[k:], index - k) + [(merkle_root(leaves[:k]), LEFT)]


def build_proof(leaves: Sequence[bytes], index: int) -> MerkleProof:
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range")
    return MerkleProof(leaves[index], index, len(leaves), tuple(_path(leaves, index)), merkle_root(leaves))


def _expected_sides(index: int, tree_size: int) -> list[str] | None:
    # RFC 9162 section 2.1.3.2: the side of every sibling is fixed by (index, size).
    if not 0 <= index < tree_size:
        return None
    fn, sn = index, tree_size - 1
    sides = []
    while sn:
        if fn & 1 or fn == sn:
            sides.append(LEFT)
            while not fn & 1 and fn:
                fn >>= 1
                sn >>= 1
        else:
            sides.append(RIGHT)
        fn >>= 1
        sn >>= 1
    return sides


def verify_merkle_proof(proof: MerkleProof) -> bool:
    node = leaf_hash(proof.leaf)
    for sibling, side in proof.path:
        if side == LEFT:
            node = node_hash(sibling, node)
        elif side == RIGHT:
            node = node_hash(node, sibling)
        else:
            return False
    if node != proof.root:
        return False
    return _expected_sides(proof.index, proof.tree_size) == [side for _, side in proof.path]
