import hashlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apow.header import ZERO_DIGEST, TemplateHeader
from apow.keys import KeyPair, address_key, is_valid_address, verify_signature
from apow.merkle import LEFT, RIGHT, MerkleProof, build_proof, leaf_hash, merkle_root, node_hash, verify_merkle_proof

from helpers import g0


def test_header_round_trips():
    g = g0(auditors_root=b"\x01" * 32, last_block=b"\x02" * 32)
    assert TemplateHeader.deserialize(g.serialize()) == g
    assert TemplateHeader.from_dict(g.to_dict()) == g
    assert TemplateHeader.deserialize(g0().serialize()) == g0()


def test_optional_fields_change_encoding():
    assert g0().serialize() != g0(auditors_root=ZERO_DIGEST).serialize()
    assert g0(auditors_root=ZERO_DIGEST).serialize() != g0(last_block=ZERO_DIGEST).serialize()


def test_header_rejects_bad_fields():
    with pytest.raises(ValueError):
        g0(parent=b"short")
    with pytest.raises(ValueError):
        g0(height=-1)
    with pytest.raises(ValueError):
        TemplateHeader.deserialize(g0().serialize() + b"\x00")


def test_template_id_per_scheme_and_time():
    g = g0()
    assert g.template_id("sha256") == hashlib.sha256(g.serialize()).digest()
    assert g.template_id() != g.template_id("sha256")
    assert g.with_time(5).template_id() != g.template_id()


@given(time=st.integers(0, 2**63), height=st.integers(0, 2**63), addr=st.text(max_size=40))
def test_serialization_is_canonical(time, height, addr):
    a = g0(time=time, height=height, pool_address=addr)
    b = g0(time=time, height=height, pool_address=addr)
    assert a.serialize() == b.serialize()
    assert TemplateHeader.deserialize(a.serialize()) == a


def test_keys_are_deterministic_and_verify():
    k = KeyPair.from_seed("x")
    assert k.address == KeyPair.from_seed(b"x").address
    sig = k.sign(b"msg")
    assert sig == k.sign(b"msg")
    assert verify_signature(k.public, sig, b"msg")
    assert not verify_signature(k.public, sig, b"msh")
    assert not verify_signature(KeyPair.from_seed("y").public, sig, b"msg")
    assert not verify_signature(b"\x00" * 5, sig, b"msg")


def test_addresses():
    k = KeyPair.from_seed("x")
    assert is_valid_address(k.address)
    assert address_key(k.address) == k.public
    assert not is_valid_address("pool-0")
    assert not is_valid_address("zz" * 32)
    assert address_key("nope") is None


# merkle

def test_single_leaf_tree():
    p = build_proof([b"a"], 0)
    assert p.path == () and p.root == leaf_hash(b"a")
    assert verify_merkle_proof(p)


def test_two_leaf_tree():
    root = node_hash(leaf_hash(b"a"), leaf_hash(b"b"))
    assert merkle_root([b"a", b"b"]) == root
    p = build_proof([b"a", b"b"], 0)
    assert p.path == ((leaf_hash(b"b"), RIGHT),)
    assert verify_merkle_proof(p)


def test_flipped_side_rejected():
    p = build_proof([b"a", b"b"], 0)
    flipped = MerkleProof(p.leaf, p.index, p.tree_size, ((p.path[0][0], LEFT),), p.root)
    assert not verify_merkle_proof(flipped)


def test_proof_binds_index():
    leaves = [bytes([i]) * 4 for i in range(5)]
    p = build_proof(leaves, 3)
    moved = MerkleProof(p.leaf, 2, p.tree_size, p.path, p.root)
    assert not verify_merkle_proof(moved)
    assert MerkleProof.from_dict(p.to_dict()) == p


def test_rfc6962_three_leaf_shape():
    a, b, c = (leaf_hash(x) for x in (b"a", b"b", b"c"))
    assert merkle_root([b"a", b"b", b"c"]) == node_hash(node_hash(a, b), c)


@given(n=st.integers(1, 40), data=st.data())
def test_every_proof_verifies(n, data):
    leaves = [hashlib.sha256(bytes([i])).digest() for i in range(n)]
    i = data.draw(st.integers(0, n - 1))
    p = build_proof(leaves, i)
    assert p.root == merkle_root(leaves)
    assert verify_merkle_proof(p)
    if p.path:
        k = data.draw(st.integers(0, len(p.path) - 1))
        sib, side = p.path[k]
        bad = list(p.path)
        bad[k] = (bytes(32) if sib != bytes(32) else b"\x01" * 32, side)
        assert not verify_merkle_proof(MerkleProof(p.leaf, p.index, p.tree_size, tuple(bad), p.root))
