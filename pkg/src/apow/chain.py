"""Blocks, v-blocks and the consensus rules that accept them.

Validators raise a :class:`ValidationError` subclass and return ``None`` on
success. :class:`ChainState` is treated as a value: ``append`` validates the
item and returns a new state, the old one is left untouched.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Union

from .header import ZERO_DIGEST, TemplateHeader
from .keys import address_key, is_valid_address, verify_signature
from .merkle import MerkleProof, verify_merkle_proof
from .pool import auditor_index
from .pow_core import (
    DEFAULT_SCHEME, BitPattern, FineTarget, derive_b2, embed_message, fine_distance_ok, hash_digest,
)

ATTRIBUTION_POOL = "pool"
ATTRIBUTION_AUDITOR = "auditor"
ATTRIBUTION_ZK_STUB = "zk_stub"
ATTRIBUTIONS = (ATTRIBUTION_POOL, ATTRIBUTION_AUDITOR, ATTRIBUTION_ZK_STUB)


class ValidationError(Exception):
    """Base class for every consensus rejection."""


class BadParent(ValidationError):
    pass


class BadHeight(ValidationError):
    pass


class BadPoW(ValidationError):
    pass


class BadDifficulty(BadPoW):
    pass


class BadVersion(ValidationError):
    pass


class BadPoolAddress(ValidationError):
    pass


class ConsecutiveVBlock(ValidationError):
    pass


class DepthExceeded(ValidationError):
    pass


class RecursionNotAllowed(DepthExceeded):
    pass


class WrongB2(ValidationError):
    pass


class BadAuditedTemplate(ValidationError):
    pass


class BadNewTemplate(ValidationError):
    pass


class BadSeal(ValidationError):
    pass


class BadAuditorProof(ValidationError):
    pass


class HeightQuotaExceeded(ValidationError):
    pass


class DuplicateVBlock(ValidationError):
    pass


@dataclass(frozen=True)
class ChainParams:
    difficulty: int = 12
    D: int = 3
    D2: int = 2
    D_I: int = 6
    immediate_inclusion: bool = False
    max_vblocks_per_height: int = 2
    vblock_contributes_work: bool = False
    allow_recursive: bool = True
    attribution: str = ATTRIBUTION_POOL
    versions: tuple[int, ...] = (1,)
    fine_target: int | None = None
    subsidy: int = 5_000_000_000
    vblock_subsidy: int = 4_500_000_000
    hash_scheme: str = DEFAULT_SCHEME

    def __post_init__(self):
        if min(self.D, self.D2, self.D_I, self.max_vblocks_per_height) < 1:
            raise ValueError("D, D2, D_I and max_vblocks_per_height must all be >= 1")
        if self.attribution not in ATTRIBUTIONS:
            raise ValueError(f"unknown attribution variant {self.attribution!r}")
        if not 0 <= self.difficulty <= 64:
            raise ValueError("difficulty must lie in [0, 64]")
        if self.fine_target is not None and not 0 <= self.fine_target < (1 << self.difficulty):
            raise ValueError("fine target must fit in the difficulty width")

    @property
    def target(self) -> FineTarget | None:
        return FineTarget(self.fine_target, True) if self.fine_target is not None else None

    def work(self) -> int:
        return 1 << self.difficulty


@dataclass(frozen=True)
class Block:
    header: TemplateHeader
    nonce: int
    kind = "block"

    def digest(self, scheme: str = DEFAULT_SCHEME) -> bytes:
        return hash_digest(embed_message(self.header, self.nonce), scheme)

    def block_id(self, scheme: str = DEFAULT_SCHEME) -> bytes:
        return self.digest(scheme)

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def parent(self) -> bytes:
        return self.header.parent

    def to_dict(self) -> dict:
        return {"header": self.header.to_dict(), "nonce": self.nonce}

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        return cls(TemplateHeader.from_dict(d["header"]), d["nonce"])


@dataclass(frozen=True)
class VBlock:
    """Sealed v-block ``(i, G_i, n, j, G_j, sigma)``.

    ``recursive_round`` is set when the v-block audits v-mining done at that
    height rather than ordinary mining; ``claimant`` carries the public key
    for the signature-bound stand-in of proof-based attribution.
    """

    audited_height: int
    audited_template: TemplateHeader
    nonce: int
    new_height: int
    new_template: TemplateHeader
    seal: bytes = b""
    auditor_proof: MerkleProof | None = None
    recursive_round: int | None = None
    claimant: bytes | None = None
    kind = "vblock"

    def signing_payload(self) -> bytes:
        g_i = self.audited_template.serialize()
        g_j = self.new_template.serialize()
        proof = self.auditor_proof.serialize() if self.auditor_proof else b""
        claimant = self.claimant or b""
        rec = -1 if self.recursive_round is None else self.recursive_round
        return b"".join([
            b"apow-vblock",
            struct.pack(">QqQQ", self.audited_height, rec, self.nonce, self.new_height),
            struct.pack(">I", len(g_i)), g_i,
            struct.pack(">I", len(g_j)), g_j,
            struct.pack(">I", len(proof)), proof,
            struct.pack(">H", len(claimant)), claimant,
        ])

    def digest(self, scheme: str = DEFAULT_SCHEME) -> bytes:
        """The proof-of-work digest of the audited template and nonce."""
        return hash_digest(embed_message(self.audited_template, self.nonce), scheme)

    def block_id(self, scheme: str = DEFAULT_SCHEME) -> bytes:
        return hash_digest(self.signing_payload(), scheme)

    def sealed(self, keypair) -> "VBlock":
        return replace(self, seal=keypair.sign(self.signing_payload()))

    @property
    def height(self) -> int:
        return self.new_height

    @property
    def parent(self) -> bytes:
        return self.new_template.parent

    def to_dict(self) -> dict:
        return {
            "audited_height": self.audited_height,
            "audited_template": self.audited_template.to_dict(),
            "nonce": self.nonce,
            "new_height": self.new_height,
            "new_template": self.new_template.to_dict(),
            "seal": self.seal.hex(),
            "auditor_proof": self.auditor_proof.to_dict() if self.auditor_proof else None,
            "recursive_round": self.recursive_round,
            "claimant": self.claimant.hex() if self.claimant else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VBlock":
        return cls(
            d["audited_height"], TemplateHeader.from_dict(d["audited_template"]), d["nonce"],
            d["new_height"], TemplateHeader.from_dict(d["new_template"]), bytes.fromhex(d["seal"]),
            MerkleProof.from_dict(d["auditor_proof"]) if d.get("auditor_proof") else None,
            d.get("recursive_round"), bytes.fromhex(d["claimant"]) if d.get("claimant") else None,
        )


Item = Union[Block, VBlock]


@dataclass(frozen=True)
class VBlockPayload:
    """Unsealed v-block carried in a transaction: audited template, nonce and the v-mining height."""

    template: TemplateHeader
    nonce: int
    vmined_height: int

    def key(self) -> bytes:
        return self.template.serialize() + self.nonce.to_bytes(8, "big")

    def to_dict(self) -> dict:
        return {"template": self.template.to_dict(), "nonce": self.nonce, "vmined_height": self.vmined_height}

    @classmethod
    def from_dict(cls, d: dict) -> "VBlockPayload":
        return cls(TemplateHeader.from_dict(d["template"]), d["nonce"], d["vmined_height"])


@dataclass(frozen=True)
class Reward:
    height: int
    address: str
    amount: int
    kind: str


@dataclass(frozen=True)
class ChainState:
    items: tuple[Item, ...]
    ids: tuple[bytes, ...]
    cumulative_work: int = 0
    vblock_txs: tuple[tuple[int, VBlockPayload], ...] = ()
    rewards: tuple[Reward, ...] = ()
    _vtx_keys: frozenset = field(default=frozenset(), repr=False, compare=False)

    @property
    def height(self) -> int:
        return len(self.items) - 1

    @property
    def tip(self) -> Item:
        return self.items[-1]

    @property
    def tip_id(self) -> bytes:
        return self.ids[-1]

    def id_at(self, height: int) -> bytes:
        if not 0 <= height <= self.height:
            raise IndexError(f"no block at height {height}")
        return self.ids[height]

    def item_at(self, height: int) -> Item:
        if not 0 <= height <= self.height:
            raise IndexError(f"no block at height {height}")
        return self.items[height]

    def vblock_count(self, height: int) -> int:
        return sum(1 for _, p in self.vblock_txs if p.vmined_height == height)

    def minted(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rewards:
            out[r.address] = out.get(r.address, 0) + r.amount
        return out

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self.items)


def genesis_block(params: ChainParams, pool_address: str = "genesis") -> Block:
    header = TemplateHeader(params.versions[0], ZERO_DIGEST, ZERO_DIGEST, 0, 0, 0, pool_address)
    return Block(header, 0)


def genesis(params: ChainParams | None = None, block: Block | None = None) -> ChainState:
    params = params or ChainParams()
    block = block or genesis_block(params)
    return ChainState((block,), (block.block_id(params.hash_scheme),))


def _pow_ok(digest: bytes, pattern: BitPattern, params: ChainParams) -> bool:
    return fine_distance_ok(digest, pattern, params.target)


def _check_header_basics(h: TemplateHeader, params: ChainParams, err: type[ValidationError]) -> None:
    if h.version not in params.versions:
        raise err(f"invalid version {h.version}")
    if h.difficulty != params.difficulty:
        raise err(f"difficulty {h.difficulty} != required {params.difficulty}")


def validate_block(chain: ChainState, b: Block, params: ChainParams | None = None) -> None:
    params = params or ChainParams()
    h = b.header
    if h.version not in params.versions:
        raise BadVersion(f"invalid version {h.version}")
    if h.height != chain.height + 1:
        raise BadHeight(f"height {h.height}, expected {chain.height + 1}")
    if h.parent != chain.tip_id:
        raise BadParent("parent is not the current tip")
    if h.difficulty != params.difficulty:
        raise BadDifficulty(f"difficulty {h.difficulty} != required {params.difficulty}")
    if params.attribution == ATTRIBUTION_POOL and not h.pool_address:
        raise BadPoolAddress("empty pool address")
    if not _pow_ok(b.digest(params.hash_scheme), BitPattern.zeros(h.difficulty), params):
        raise BadPoW("digest does not meet the declared difficulty")


def _audited_round(v: VBlock) -> int:
    return v.audited_height if v.recursive_round is None else v.recursive_round


def _seal_key(v: VBlock, params: ChainParams) -> bytes | None:
    if params.attribution == ATTRIBUTION_AUDITOR:
        return v.auditor_proof.leaf if v.auditor_proof else None
    if params.attribution == ATTRIBUTION_ZK_STUB:
        return v.claimant
    return address_key(v.audited_template.pool_address)


def check_depth(chain_height: int, v: VBlock, params: ChainParams) -> None:
    i, j, k = v.audited_height, v.new_height, v.recursive_round
    if k is None:
        if not 0 < j - i <= params.D:
            raise DepthExceeded(f"j - i = {j - i} outside (0, {params.D}]")
        if params.immediate_inclusion and j != i + 1:
            raise DepthExceeded("immediate inclusion requires j = i + 1")
        return
    if not params.allow_recursive:
        raise RecursionNotAllowed("recursive v-blocks are disabled")
    if not 0 < k - i <= params.D:
        raise DepthExceeded(f"k - i = {k - i} outside (0, {params.D}]")
    if not 0 < j - k <= params.D2:
        raise DepthExceeded(f"j - k = {j - k} outside (0, {params.D2}]")
    if params.immediate_inclusion and j != k + 1:
        raise DepthExceeded("immediate inclusion requires j = k + 1")


def validate_vblock(chain: ChainState, v: VBlock, params: ChainParams | None = None) -> None:
    params = params or ChainParams()
    scheme = params.hash_scheme
    if isinstance(chain.tip, VBlock):
        raise ConsecutiveVBlock("a v-block must be followed by a regular block")

    j = v.new_height
    if j != chain.height + 1:
        raise BadHeight(f"v-block height {j}, expected {chain.height + 1}")
    if v.new_template.height != j:
        raise BadNewTemplate("new template height differs from the v-block height")
    if v.new_template.parent != chain.tip_id:
        raise BadParent("new template does not extend the tip")

    check_depth(chain.height, v, params)

    g_i, i = v.audited_template, v.audited_height
    if g_i.height != i:
        raise BadAuditedTemplate(f"audited template height {g_i.height} != {i}")
    if i < 1 or g_i.parent != chain.id_at(i - 1):
        raise BadAuditedTemplate("audited template parent is not the canonical block at i - 1")
    _check_header_basics(g_i, params, BadAuditedTemplate)
    if params.attribution != ATTRIBUTION_ZK_STUB and not is_valid_address(g_i.pool_address):
        raise BadAuditedTemplate("audited template pool address is not a valid payment address")

    b2 = derive_b2(chain.id_at(j - 1), g_i.difficulty, scheme)
    if not _pow_ok(v.digest(scheme), b2, params):
        raise WrongB2("digest does not match the pattern derived from block j - 1")

    _check_header_basics(v.new_template, params, BadNewTemplate)

    key = _seal_key(v, params)
    if key is None or not verify_signature(key, v.seal, v.signing_payload()):
        raise BadSeal("seal does not verify under the attributed key")

    if params.attribution == ATTRIBUTION_AUDITOR:
        proof = v.auditor_proof
        if proof is None or not verify_merkle_proof(proof):
            raise BadAuditorProof("missing or invalid auditor inclusion proof")
        if g_i.auditors_root is None or proof.root != g_i.auditors_root:
            raise BadAuditorProof("proof root differs from the audited template's auditors root")
        seed = chain.id_at(_audited_round(v))
        if proof.index != auditor_index(seed, proof.tree_size):
            raise BadAuditorProof("proof leaf is not the auditor selected for this round")


def verify_seal(v: VBlock, params: ChainParams | None = None) -> bool:
    params = params or ChainParams()
    key = _seal_key(v, params)
    return key is not None and verify_signature(key, v.seal, v.signing_payload())


def validate_vblock_scheme2c(chain: ChainState, payload: VBlockPayload, inclusion_height: int,
                             params: ChainParams | None = None) -> None:
    """Checks an unsealed (empty) v-block carried in a transaction included at ``inclusion_height``."""
    params = params or ChainParams()
    g, j, t = payload.template, payload.vmined_height, inclusion_height
    i = g.height
    if g.version not in params.versions:
        raise BadVersion(f"invalid version {g.version}")
    if not 1 <= j <= chain.height + 1 or j - 1 > chain.height:
        raise BadParent(f"no canonical block at height {j - 1}")
    if not 0 < t - j <= params.D_I:
        raise DepthExceeded(f"t - j = {t - j} outside (0, {params.D_I}]")
    if i < 1 or i > chain.height or g.parent != chain.id_at(i - 1):
        raise BadParent("template parent is not the canonical block at its height - 1")
    if not 0 < j - i <= params.D:
        raise BadHeight(f"v-mining height {j} is not within (i, i + {params.D}] for i = {i}")
    if g.difficulty != params.difficulty:
        raise BadDifficulty(f"difficulty {g.difficulty} != required {params.difficulty}")
    b2 = derive_b2(chain.id_at(j - 1), g.difficulty, params.hash_scheme)
    digest = hash_digest(embed_message(g, payload.nonce), params.hash_scheme)
    if not _pow_ok(digest, b2, params):
        raise BadPoW("digest does not match the pattern derived from block j - 1")
    if not is_valid_address(g.pool_address):
        raise BadPoolAddress("pool address is not a valid payment address")
    if payload.key() in chain._vtx_keys:
        raise DuplicateVBlock("v-block already included")
    if chain.vblock_count(j) >= params.max_vblocks_per_height:
        raise HeightQuotaExceeded(f"height {j} already has {params.max_vblocks_per_height} v-blocks")


def validate(chain: ChainState, item: Item, params: ChainParams | None = None) -> None:
    if isinstance(item, VBlock):
        validate_vblock(chain, item, params)
    elif isinstance(item, Block):
        validate_block(chain, item, params)
    else:
        raise TypeError(f"not a chain item: {item!r}")


def _reward_for(item: Item, params: ChainParams) -> Reward:
    if isinstance(item, Block):
        return Reward(item.height, item.header.pool_address, params.subsidy, "block")
    if params.attribution == ATTRIBUTION_AUDITOR and item.auditor_proof:
        address = item.auditor_proof.leaf.hex()
    elif params.attribution == ATTRIBUTION_ZK_STUB and item.claimant:
        address = item.claimant.hex()
    else:
        address = item.audited_template.pool_address
    return Reward(item.height, address, params.vblock_subsidy, "vblock")


def append(chain: ChainState, item: Item, params: ChainParams | None = None,
           vblock_txs: Iterable[VBlockPayload] = ()) -> ChainState:
    """Validate ``item`` (and any v-block transactions it carries) and extend the chain."""
    params = params or ChainParams()
    validate(chain, item, params)
    vblock_txs = list(vblock_txs)
    if vblock_txs and not isinstance(item, Block):
        raise ValidationError("only regular blocks carry v-block transactions")
    t = item.height
    staged = chain
    for payload in vblock_txs:
        validate_vblock_scheme2c(staged, payload, t, params)
        staged = replace(
            staged,
            vblock_txs=staged.vblock_txs + ((t, payload),),
            _vtx_keys=staged._vtx_keys | {payload.key()},
        )
    work = params.work() if isinstance(item, Block) or params.vblock_contributes_work else 0
    rewards = [_reward_for(item, params)]
    rewards += [Reward(t, p.template.pool_address, params.vblock_subsidy, "vblock_tx") for p in vblock_txs]
    return ChainState(
        chain.items + (item,),
        chain.ids + (item.block_id(params.hash_scheme),),
        chain.cumulative_work + work,
        staged.vblock_txs,
        chain.rewards + tuple(rewards),
        staged._vtx_keys,
    )


class ForkSet:
    """Every accepted item across competing branches; the canonical chain has
    the most cumulative work, ties going to the branch whose tip was seen first.
    """

    def __init__(self, params: ChainParams | None = None, base: ChainState | None = None):
        self.params = params or ChainParams()
        base = base or genesis(self.params)
        self._states: dict[bytes, ChainState] = {base.tip_id: base}
        self._order: dict[bytes, int] = {base.tip_id: 0}

    def add(self, item: Item) -> ChainState:
        parent_state = self._states.get(item.parent)
        if parent_state is None:
            raise BadParent("unknown parent")
        state = append(parent_state, item, self.params)
        if state.tip_id not in self._states:
            self._states[state.tip_id] = state
            self._order[state.tip_id] = len(self._order)
        return state

    def tips(self) -> list[ChainState]:
        return list(self._states.values())

    def canonical(self) -> ChainState:
        return max(self._states.values(), key=lambda s: (s.cumulative_work, s.height, -self._order[s.tip_id]))

    def competing_at(self, height: int) -> int:
        return len({s.id_at(height) for s in self._states.values() if s.height >= height})


def snapshot_records(chain: ChainState, params: ChainParams | None = None) -> list[dict]:
    records = []
    for h, (item, bid) in enumerate(zip(chain.items, chain.ids)):
        is_v = isinstance(item, VBlock)
        records.append({
            "kind": item.kind,
            "height": h,
            "id": bid.hex(),
            "parent": item.parent.hex(),
            "difficulty": (item.audited_template if is_v else item.header).difficulty,
            "audited_height": item.audited_height if is_v else None,
            "vblock_txs": [p.to_dict() for t, p in chain.vblock_txs if t == h],
            "data": item.to_dict(),
        })
    return records


def export_chain(chain: ChainState, fp, params: ChainParams | None = None) -> None:
    for rec in snapshot_records(chain, params):
        fp.write(json.dumps(rec, sort_keys=True) + "\n")


def load_items(fp) -> list[tuple[Item, list[VBlockPayload]]]:
    out = []
    for line in fp:
        if not line.strip():
            continue
        rec = json.loads(line)
        cls = VBlock if rec["kind"] == "vblock" else Block
        out.append((cls.from_dict(rec["data"]), [VBlockPayload.from_dict(p) for p in rec["vblock_txs"]]))
    return out


def revalidate(items: list[tuple[Item, list[VBlockPayload]]], params: ChainParams | None = None) -> ChainState:
    """Rebuild a chain from genesis, re-running every consensus check."""
    params = params or ChainParams()
    if not items:
        raise ValidationError("empty chain")
    first = items[0][0]
    if not isinstance(first, Block) or first.height != 0:
        raise ValidationError("chain does not start with a genesis block")
    chain = genesis(params, first)
    for item, txs in items[1:]:
        chain = append(chain, item, params, txs)
    return chain
