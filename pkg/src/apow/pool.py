"""Pool accounting: payout schemes, stake retention, auditor selection and
adjudication of withholding evidence.

Amounts are integers (smallest currency unit). The pool reserve is the
pool operator's net position: share-conditioned credits are paid out of it
and block value flows into it, so ``balances + pending + reserve`` always
equals the total value the pool has received.
"""
from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

from .merkle import MerkleProof, build_proof, merkle_root
from .pow_core import DEFAULT_SCHEME, BitPattern, embed_message, hash_digest, matches_prefix
from .workunits import AuditableWorkUnit, ShareRecord

PPS = "PPS"
FPPS = "FPPS"
PPS_PLUS = "PPSplus"
PPLNS = "PPLNS"
SCORE = "Score"
SCHEMES = (PPS, FPPS, PPS_PLUS, PPLNS, SCORE)

# share-conditioned schemes pay every share immediately
SHARE_CONDITIONED = (PPS, FPPS)
DEFAULT_RETENTION = 100


@dataclass(frozen=True)
class PayoutScheme:
    kind: str
    N: int = 1000
    expected_fees: int = 0
    half_life: float = 1000.0

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown payout scheme {self.kind!r}")
        if self.N < 1:
            raise ValueError("PPLNS window N must be at least 1")
        if self.half_life <= 0:
            raise ValueError("score half-life must be positive")
        if self.expected_fees < 0:
            raise ValueError("expected fees must be non-negative")

    def per_share_value(self, subsidy: int) -> int:
        """Block value ``R`` that a share is paid against, before scaling by rho."""
        if self.kind == FPPS:
            return subsidy + self.expected_fees
        if self.kind in (PPS, PPS_PLUS):
            return subsidy
        return 0


@dataclass
class PendingEntry:
    miner: str
    amount: int
    maturity: int
    kind: str = "share"


@dataclass
class Ledger:
    balances: dict[str, int] = field(default_factory=dict)
    pending: list[PendingEntry] = field(default_factory=list)
    pool_reserve: int = 0
    forfeited: dict[str, int] = field(default_factory=dict)
    banned: set[str] = field(default_factory=set)
    received: int = 0

    def add_pending(self, miner: str, amount: int, maturity: int, kind: str = "share") -> None:
        if amount < 0:
            raise ValueError("credit must be non-negative")
        if amount:
            self.pending.append(PendingEntry(miner, amount, maturity, kind))

    def pending_of(self, miner: str) -> int:
        return sum(e.amount for e in self.pending if e.miner == miner)

    def confirmed(self, miner: str) -> int:
        return self.balances.get(miner, 0)

    def income(self, miner: str) -> int:
        """Everything credited to ``miner`` that was not forfeited."""
        return self.confirmed(miner) + self.pending_of(miner)

    def miners(self) -> list[str]:
        names = set(self.balances) | set(self.forfeited) | {e.miner for e in self.pending}
        return sorted(names)

    def total(self) -> int:
        return sum(self.balances.values()) + sum(e.amount for e in self.pending) + self.pool_reserve

    def snapshot(self) -> dict:
        return {
            "balances": dict(sorted(self.balances.items())),
            "pending": {m: self.pending_of(m) for m in self.miners()},
            "forfeited": dict(sorted(self.forfeited.items())),
            "reserve": self.pool_reserve,
            "received": self.received,
            "banned": sorted(self.banned),
        }


@dataclass(frozen=True)
class Distribution:
    """Outcome of one block event; ``sum(credits) + reserve_delta == value``."""

    height: int
    value: int
    credits: Mapping[str, int]
    reserve_delta: int
    kind: str = "block"

    def conserved(self) -> bool:
        return sum(self.credits.values()) + self.reserve_delta == self.value

    def to_dict(self) -> dict:
        return {"height": self.height, "value": self.value, "credits": dict(sorted(self.credits.items())),
                "reserve_delta": self.reserve_delta, "kind": self.kind}


def split_proportional(value: int, weights: Mapping[str, float | int]) -> tuple[dict[str, int], int]:
    """Floor-split ``value`` by weight; returns the credits and the dust left over."""
    total = sum(weights.values())
    if value < 0:
        raise ValueError("value must be non-negative")
    if not weights or total <= 0:
        return {}, value
    credits = {}
    if all(isinstance(w, int) for w in weights.values()):
        for m in sorted(weights):
            credits[m] = value * weights[m] // total
    else:
        for m in sorted(weights):
            credits[m] = int(Fraction(value) * Fraction(weights[m]) / Fraction(total))
    return credits, value - sum(credits.values())


class Accountant:
    """Single accounting authority for a pool; every mutation goes through here."""

    def __init__(self, scheme: PayoutScheme, subsidy: int, retention: int = DEFAULT_RETENTION,
                 ledger: Ledger | None = None):
        if retention < 0:
            raise ValueError("retention must be non-negative")
        self.scheme = scheme
        self.subsidy = subsidy
        self.retention = retention
        self.ledger = ledger or Ledger()
        self.window: deque[str] = deque(maxlen=scheme.N)
        self.scores: dict[str, float] = {}
        self._score_seq = 0
        self.distributions: list[Distribution] = []
        self._block_dists: dict[int, Distribution] = {}
        self.block_revenue = 0

    # shares

    def credit_share(self, miner: str, height: int, rho: Fraction | float, R: int | None = None) -> int:
        """Account one accepted share of relative difficulty ``rho``; returns the immediate credit."""
        led = self.ledger
        if miner in led.banned:
            return 0
        kind = self.scheme.kind
        if kind in (PPS_PLUS, PPLNS):
            self.window.append(miner)
        elif kind == SCORE:
            self._add_score(miner)
        if kind not in (PPS, FPPS, PPS_PLUS):
            return 0
        R = self.scheme.per_share_value(self.subsidy) if R is None else R
        credit = int(Fraction(R) * Fraction(rho))
        led.add_pending(miner, credit, height + self.retention)
        led.pool_reserve -= credit
        return credit

    def _add_score(self, miner: str) -> None:
        w = 2.0 ** (self._score_seq / self.scheme.half_life)
        self._score_seq += 1
        self.scores[miner] = self.scores.get(miner, 0.0) + w
        if w > 1e200:
            scale = 2.0 ** (-self._score_seq / self.scheme.half_life)
            self.scores = {m: s * scale for m, s in self.scores.items()}
            self._score_seq = 0

    # blocks

    def _window_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for m in self.window:
            if m not in self.ledger.banned:
                counts[m] = counts.get(m, 0) + 1
        return counts

    def _allocate(self, value: int, fees: int) -> tuple[dict[str, int], int]:
        if not 0 <= fees <= value:
            raise ValueError("fees must lie in [0, value]")
        s = self.scheme.kind
        if s in (PPS, FPPS):
            return {}, value
        if s == PPS_PLUS:
            credits, dust = split_proportional(fees, self._window_counts())
            return credits, dust + value - fees
        if s == PPLNS:
            return split_proportional(value, self._window_counts())
        weights = {m: w for m, w in self.scores.items() if m not in self.ledger.banned}
        self.scores = {}
        self._score_seq = 0
        return split_proportional(value, weights)

    def distribute_block_reward(self, height: int, value: int, fees: int = 0, kind: str = "block") -> Distribution:
        """Settle a block attributed to the pool worth ``value`` (``fees`` of it transaction fees)."""
        credits, dust = self._allocate(value, fees)
        return self._settle(height, value, credits, dust, kind)

    def _settle(self, height: int, value: int, credits: dict[str, int], dust: int, kind: str) -> Distribution:
        led = self.ledger
        for m, amount in credits.items():
            led.add_pending(m, amount, height + self.retention, kind)
        led.pool_reserve += dust
        led.received += value
        self.block_revenue += value
        dist = Distribution(height, value, {m: a for m, a in credits.items() if a}, dust, kind)
        self.distributions.append(dist)
        if kind == "block":
            self._block_dists[height] = dist
        return dist

    def block_distribution(self, height: int) -> Distribution | None:
        return self._block_dists.get(height)

    def distribute_vblock_reward(self, height: int, value: int, mode: str = "pool",
                                 reference: Distribution | None = None, auditor: str | None = None,
                                 prize: int = 0) -> Distribution:
        """Route a v-block reward.

        ``pool`` treats it like a found block; ``last_block`` pays it out in the
        proportions of ``reference`` (the payout of the block the audited
        template pointed at). ``prize`` goes to the auditor first.
        """
        if mode not in ("pool", "last_block"):
            raise ValueError(f"unknown v-block routing mode {mode!r}")
        prize = min(prize, value) if auditor else 0
        rest = value - prize
        if mode == "pool":
            credits, dust = self._allocate(rest, 0)
        else:
            weights = dict(reference.credits) if reference else {}
            weights = {m: w for m, w in weights.items() if m not in self.ledger.banned}
            credits, dust = split_proportional(rest, weights)
        if prize:
            credits[auditor] = credits.get(auditor, 0) + prize
        return self._settle(height, value, credits, dust, "vblock")

    # penalties and maturity

    def penalize(self, miner: str, policy: "PenaltyPolicy") -> int:
        return apply_penalty(self.ledger, miner, policy)

    def mature(self, height: int) -> int:
        return mature_rewards(self.ledger, height)


def credit_share(acct: Accountant, share: ShareRecord, height: int, rho, R: int | None = None) -> int:
    return acct.credit_share(share.miner, height, rho, R)


def distribute_block_reward(acct: Accountant, height: int, value: int, fees: int = 0) -> Distribution:
    return acct.distribute_block_reward(height, value, fees)


def mature_rewards(ledger: Ledger, height: int) -> int:
    """Move pending entries with ``maturity <= height`` to confirmed balances."""
    released = 0
    keep = []
    for e in ledger.pending:
        if e.maturity <= height:
            ledger.balances[e.miner] = ledger.balances.get(e.miner, 0) + e.amount
            released += e.amount
        else:
            keep.append(e)
    ledger.pending = keep
    return released


def share_ratio(share_difficulty: int, difficulty: int) -> Fraction:
    """rho: probability that a share is also a full solution."""
    if share_difficulty > difficulty:
        raise ValueError("share difficulty exceeds block difficulty")
    return Fraction(1, 1 << (difficulty - share_difficulty))


# auditor selection

def auditor_index(block_id: bytes, n: int) -> int:
    """Uniform index in ``[0, n)`` drawn from a SHA-256 counter stream seeded by ``block_id``.

    Draws of 64 bits above the largest multiple of ``n`` are rejected, so
    the result carries no modulo bias.
    """
    if n < 1:
        raise ValueError("cannot select from an empty set")
    if n == 1:
        return 0
    space = 1 << 64
    limit = space - space % n
    counter = 0
    while True:
        block = hashlib.sha256(b"apow-auditor" + block_id + counter.to_bytes(8, "big")).digest()
        for k in range(0, 32, 8):
            draw = int.from_bytes(block[k:k + 8], "big")
            if draw < limit:
                return draw % n
        counter += 1


@dataclass(frozen=True)
class AuditorSet:
    members: tuple[bytes, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("auditor set is empty")

    @property
    def root(self) -> bytes:
        return merkle_root(self.members)

    def proof(self, index: int) -> MerkleProof:
        return build_proof(self.members, index)


def select_auditor(aset: AuditorSet, block_id: bytes) -> tuple[int, bytes, MerkleProof]:
    k = auditor_index(block_id, len(aset.members))
    return k, aset.members[k], aset.proof(k)


# evidence

class Verdict(str, Enum):
    GUILTY = "Guilty"
    INNOCENT = "Innocent"
    INVALID = "Invalid"


@dataclass(frozen=True)
class PenaltyPolicy:
    forfeit_pending: bool = True
    ban: bool = True


@dataclass(frozen=True)
class EvidenceRecord:
    unit: AuditableWorkUnit
    nonce: int
    digest: bytes
    pattern: BitPattern
    reporter: str

    @property
    def accused(self) -> str:
        return self.unit.owner

    def to_dict(self, scheme: str = DEFAULT_SCHEME) -> dict:
        return {
            "accused": self.accused, "reporter": self.reporter,
            "template": self.unit.template.to_dict(),
            "template_id": self.unit.template.template_id(scheme).hex(),
            "range": [self.unit.range.start, self.unit.range.end],
            "unit_pattern": self.unit.pattern.pattern_id,
            "round": self.unit.round, "nonce": self.nonce, "digest": self.digest.hex(),
            "pattern": self.pattern.pattern_id,
        }


def apply_penalty(ledger: Ledger, miner: str, policy: PenaltyPolicy) -> int:
    """Forfeit the miner's pending rewards into the reserve; returns the amount taken."""
    taken = 0
    if policy.forfeit_pending:
        keep = []
        for e in ledger.pending:
            if e.miner == miner:
                taken += e.amount
            else:
                keep.append(e)
        ledger.pending = keep
        ledger.pool_reserve += taken
        ledger.forfeited[miner] = ledger.forfeited.get(miner, 0) + taken
    if policy.ban:
        ledger.banned.add(miner)
    return taken


def adjudicate_evidence(e: EvidenceRecord, reported_shares: Iterable[ShareRecord],
                        policy: PenaltyPolicy | None = None, ledger: Ledger | None = None,
                        scheme: str = DEFAULT_SCHEME) -> Verdict:
    """Judge an audit hit using public data only.

    The penalty is applied to ``ledger`` when one is given and the verdict is
    guilty.
    """
    u = e.unit
    if e.nonce not in u.range:
        return Verdict.INVALID
    if hash_digest(embed_message(u.template, e.nonce), scheme) != e.digest:
        return Verdict.INVALID
    if e.pattern.length > u.pattern.length or e.pattern != u.pattern.prefix(e.pattern.length):
        return Verdict.INVALID
    if not matches_prefix(e.digest, e.pattern):
        return Verdict.INVALID
    tid = u.template.template_id(scheme)
    for s in reported_shares:
        if s.miner == u.owner and s.template_id == tid and s.nonce == e.nonce and s.pattern == u.pattern:
            return Verdict.INNOCENT
    if ledger is not None:
        apply_penalty(ledger, u.owner, policy or PenaltyPolicy())
    return Verdict.GUILTY


def export_ledger(ledger: Ledger, height: int, fp) -> None:
    """One line per miner: confirmed, pending and forfeited amounts at ``height``."""
    for m in ledger.miners():
        fp.write(json.dumps({
            "height": height, "miner": m, "confirmed": ledger.confirmed(m),
            "pending": ledger.pending_of(m), "forfeited": ledger.forfeited.get(m, 0),
        }, sort_keys=True) + "\n")
