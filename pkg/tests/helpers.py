"""Small builders shared by the test modules."""
from __future__ import annotations

import hashlib
from pathlib import Path

from apow.chain import Block, ChainParams, VBlock, VBlockPayload, append, genesis
from apow.header import ZERO_DIGEST, TemplateHeader
from apow.keys import KeyPair
from apow.pow_core import BitPattern, NonceRange, derive_b2, first_hit

GOLDEN = Path(__file__).parent / "golden"
SCENARIOS = Path(__file__).parent.parent / "src" / "apow" / "scenarios"

POOL = KeyPair.from_seed("test-pool")
OTHER = KeyPair.from_seed("test-other")


def golden() -> dict[str, str]:
    out = {}
    for line in (GOLDEN / "vectors.txt").read_text().splitlines():
        if line and not line.startswith("#"):
            name, value = line.split()
            out[name] = value
    return out


def g0(**changes) -> TemplateHeader:
    fields = dict(version=1, parent=ZERO_DIGEST, txroot=ZERO_DIGEST, height=0, time=0, difficulty=8,
                  pool_address="pool-0")
    fields.update(changes)
    return TemplateHeader(**fields)


def params(**changes) -> ChainParams:
    base = dict(difficulty=8, D=3, D2=2, D_I=6, hash_scheme="sha256")
    base.update(changes)
    return ChainParams(**base)


def next_template(chain, p: ChainParams, key=POOL, time=0, **changes) -> TemplateHeader:
    fields = dict(version=1, parent=chain.tip_id, txroot=ZERO_DIGEST, height=chain.height + 1, time=time,
                  difficulty=p.difficulty, pool_address=key.address)
    fields.update(changes)
    return TemplateHeader(**fields)


def mine_block(chain, p: ChainParams, key=POOL, time=0) -> Block:
    g = next_template(chain, p, key, time)
    n, _ = first_hit(g, BitPattern.zeros(p.difficulty), 0, p.hash_scheme)
    return Block(g, n)


def grow(chain, p: ChainParams, blocks: int, key=POOL):
    for _ in range(blocks):
        chain = append(chain, mine_block(chain, p, key, time=chain.height + 1), p)
    return chain


def audited_template(chain, p: ChainParams, i: int, key=POOL, time=10_000, **changes) -> TemplateHeader:
    """A template for height ``i`` that lost the race (distinct time from the canonical block)."""
    fields = dict(version=1, parent=chain.id_at(i - 1), txroot=ZERO_DIGEST, height=i, time=time,
                  difficulty=p.difficulty, pool_address=key.address)
    fields.update(changes)
    return TemplateHeader(**fields)


def vmine_nonce(chain, p: ChainParams, g: TemplateHeader, j: int, d: int | None = None) -> int:
    b2 = derive_b2(chain.id_at(j - 1), p.difficulty if d is None else d, p.hash_scheme)
    n, _ = first_hit(g, b2, 0, p.hash_scheme)
    return n


def make_vblock(chain, p: ChainParams, i: int, key=POOL, recursive_round=None, new_template=None,
                audited=None, seal_key=None) -> VBlock:
    j = chain.height + 1
    g = audited or audited_template(chain, p, i, key)
    n = vmine_nonce(chain, p, g, j)
    gj = new_template or next_template(chain, p, key)
    v = VBlock(i, g, n, j, gj, recursive_round=recursive_round)
    return v.sealed(seal_key or key)


def make_payload(chain, p: ChainParams, i: int, j: int, key=POOL, **changes) -> VBlockPayload:
    """Unsealed v-block mined at height ``j`` over a template for height ``i``, honouring ``changes``."""
    fields = dict(version=1, parent=chain.id_at(i - 1) if i >= 1 else ZERO_DIGEST, txroot=ZERO_DIGEST,
                  height=i, time=20_000 + i * 7 + j, difficulty=p.difficulty, pool_address=key.address)
    fields.update(changes)
    g = TemplateHeader(**fields)
    return VBlockPayload(g, vmine_nonce(chain, p, g, j, d=g.difficulty), j)


def fresh(p: ChainParams | None = None):
    return genesis(p or params())


def brute(template, r: NonceRange, pattern: BitPattern, scheme="sha256d"):
    """Per-nonce oracle written against hashlib and string bit prefixes."""
    out = []
    for n in range(r.start, r.end + 1):
        m = template.serialize() + n.to_bytes(8, "big")
        x = hashlib.sha256(m).digest()
        if scheme == "sha256d":
            x = hashlib.sha256(x).digest()
        bits = bin(int.from_bytes(x, "big"))[2:].zfill(256)
        if bits[:pattern.length] == pattern.bits:
            out.append((n, x))
    return out
