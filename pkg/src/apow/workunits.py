"""Pool-side work assignment, share intake and auditable search spaces."""
from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .header import TemplateHeader
from .pow_core import (
    DEFAULT_SCHEME, NONCE_MAX, BitPattern, NonceRange, embed_message, hash_digest, matches_prefix,
)

DEFAULT_UNIT_SIZE = 1 << 20
DEFAULT_GRANULE = 1 << 10


class ShareRejected(Exception):
    pass


class StaleTemplate(ShareRejected):
    pass


class BadDigest(ShareRejected):
    pass


class BelowShareDifficulty(ShareRejected):
    pass


class Duplicate(ShareRejected):
    pass


class RoundClosed(Exception):
    pass


class NonceSpaceExhausted(Exception):
    pass


@dataclass(frozen=True)
class WorkUnit:
    template: TemplateHeader
    range: NonceRange
    assigned_to: str
    round: int
    pattern: BitPattern


@dataclass(frozen=True)
class AuditableWorkUnit:
    template: TemplateHeader
    range: NonceRange
    source: WorkUnit

    @property
    def owner(self) -> str:
        return self.source.assigned_to

    @property
    def round(self) -> int:
        return self.source.round

    @property
    def pattern(self) -> BitPattern:
        return self.source.pattern


@dataclass(frozen=True)
class SearchSpace:
    miner: str
    round: int
    units: tuple[AuditableWorkUnit, ...]

    def __post_init__(self):
        parents = {u.template.parent for u in self.units}
        if len(parents) > 1:
            raise ValueError("all templates of a search space must share the same parent")

    @property
    def total_length(self) -> int:
        return sum(len(u.range) for u in self.units)


@dataclass(frozen=True)
class ShareRecord:
    miner: str
    template_id: bytes
    nonce: int
    digest: bytes
    pattern: BitPattern
    timestamp: int
    seq: int = 0

    @property
    def pattern_id(self) -> str:
        return self.pattern.pattern_id

    def to_dict(self) -> dict:
        return {
            "miner": self.miner, "template": self.template_id.hex(), "nonce": self.nonce,
            "digest": self.digest.hex(), "pattern": self.pattern_id, "time": self.timestamp,
            "seq": self.seq,
        }


class AuditSlice(NamedTuple):
    """A sub-interval of an auditable unit selected for re-scanning."""

    unit: AuditableWorkUnit
    range: NonceRange

    @property
    def template(self) -> TemplateHeader:
        return self.unit.template


def truncate_to_last_share(u: WorkUnit, shares: Iterable[ShareRecord]) -> AuditableWorkUnit | None:
    """Cut a unit at its last share; units without shares are not auditable."""
    last = None
    for s in shares:
        if s.nonce not in u.range:
            raise ValueError(f"share nonce {s.nonce} outside unit range [{u.range.start}, {u.range.end}]")
        last = s.nonce if last is None else max(last, s.nonce)
    if last is None:
        return None
    return AuditableWorkUnit(u.template, NonceRange(u.range.start, last), u)


def select_audit_subset(space: SearchSpace, coverage: float, seed, granule: int = DEFAULT_GRANULE) -> list[AuditSlice]:
    """Random subset of ``space`` covering ``round(coverage * total)`` nonces.

    The space is cut into granule-aligned pieces, the pieces are shuffled and
    taken in order; the last piece is trimmed so the total is exact.
    """
    if not 0.0 <= coverage <= 1.0:
        raise ValueError("coverage must lie in [0, 1]")
    if granule < 1:
        raise ValueError("granule must be positive")
    pieces: list[tuple[int, NonceRange]] = []
    for k, u in enumerate(space.units):
        a = u.range.start
        while a <= u.range.end:
            b = min((a // granule + 1) * granule - 1, u.range.end)
            pieces.append((k, NonceRange(a, b)))
            a = b + 1
    target = round(coverage * space.total_length)
    if target == 0:
        return []
    order = list(range(len(pieces)))
    random.Random(seed).shuffle(order)
    chosen: list[tuple[int, NonceRange]] = []
    remaining = target
    for idx in order:
        if remaining == 0:
            break
        k, r = pieces[idx]
        if len(r) > remaining:
            r = NonceRange(r.start, r.start + remaining - 1)
        chosen.append((k, r))
        remaining -= len(r)
    chosen.sort(key=lambda kr: (kr[0], kr[1].start))
    out: list[AuditSlice] = []
    for k, r in chosen:
        if out and out[-1].unit is space.units[k] and out[-1].range.end + 1 == r.start:
            out[-1] = AuditSlice(space.units[k], NonceRange(out[-1].range.start, r.end))
        else:
            out.append(AuditSlice(space.units[k], r))
    return out


@dataclass
class _Round:
    number: int
    templates: dict[bytes, TemplateHeader] = field(default_factory=dict)
    cursor: int = 0
    units: list[WorkUnit] = field(default_factory=list)
    open: bool = True


class PoolState:
    """Work assignment and share intake for one pool.

    Shares are keyed by ``(template, nonce, pattern)``; a share at a nonce
    can legitimately match both the zero pattern and a v-mining pattern.
    """

    def __init__(self, share_difficulty: int, unit_size: int = DEFAULT_UNIT_SIZE,
                 allow_rolling: bool = False, scheme: str = DEFAULT_SCHEME):
        if unit_size < 1:
            raise ValueError("unit size must be positive")
        self.share_difficulty = share_difficulty
        self.unit_size = unit_size
        self.allow_rolling = allow_rolling
        self.scheme = scheme
        self.rounds: dict[int, _Round] = {}
        self.current_round: int | None = None
        self.templates: dict[bytes, TemplateHeader] = {}
        self.template_round: dict[bytes, int] = {}
        self.rolled_from: dict[bytes, bytes] = {}
        self.audit_patterns: dict[bytes, set[str]] = defaultdict(set)
        self.shares: list[ShareRecord] = []
        self._seen: set[tuple[bytes, int, str]] = set()
        self._by_miner_template: dict[tuple[str, bytes], list[ShareRecord]] = defaultdict(list)
        self._extra_units: dict[int, list[WorkUnit]] = defaultdict(list)

    # rounds and templates

    def open_round(self, number: int) -> None:
        if self.current_round is not None and self.current_round in self.rounds:
            self.rounds[self.current_round].open = False
        self.rounds[number] = _Round(number)
        self.current_round = number

    def close_round(self, number: int) -> None:
        self.rounds[number].open = False

    def issue_template(self, template: TemplateHeader) -> bytes:
        r = self._open(template.height)
        tid = template.template_id(self.scheme)
        r.templates[tid] = template
        self.templates[tid] = template
        self.template_round[tid] = r.number
        return tid

    def _open(self, number: int) -> _Round:
        r = self.rounds.get(number)
        if r is None or not r.open:
            raise RoundClosed(f"round {number} is not open")
        return r

    def assign_work(self, miner: str, round_number: int, template: TemplateHeader | None = None,
                    size: int | None = None) -> WorkUnit:
        """Next disjoint nonce range of the round on a pool-issued template."""
        r = self._open(round_number)
        if template is None:
            if not r.templates:
                raise ValueError("no template issued for this round")
            template = list(r.templates.values())[-1]
        elif template.template_id(self.scheme) not in r.templates:
            raise ValueError("template was not issued for this round")
        size = size or self.unit_size
        start = r.cursor
        if start > NONCE_MAX:
            raise NonceSpaceExhausted(f"round {round_number} nonce space exhausted")
        end = min(start + size - 1, NONCE_MAX)
        r.cursor = end + 1
        unit = WorkUnit(template, NonceRange(start, end), miner, round_number, BitPattern.zeros(template.difficulty))
        r.units.append(unit)
        return unit

    def register_unit(self, unit: WorkUnit) -> None:
        """Record work the pool handed out outside ``assign_work`` (audit slices)."""
        tid = unit.template.template_id(self.scheme)
        self.templates.setdefault(tid, unit.template)
        self.audit_patterns[tid].add(unit.pattern.pattern_id)
        self._extra_units[unit.round].append(unit)

    def retire_audit_pattern(self, template: TemplateHeader, pattern: BitPattern) -> None:
        tid = template.template_id(self.scheme)
        self.audit_patterns[tid].discard(pattern.pattern_id)

    def units_for(self, round_number: int) -> list[WorkUnit]:
        r = self.rounds.get(round_number)
        return (r.units if r else []) + self._extra_units.get(round_number, [])

    # shares

    def _resolve_template(self, share: ShareRecord, template: TemplateHeader | None) -> TemplateHeader:
        tid = share.template_id
        known = self.templates.get(tid)
        if known is not None:
            return known
        if template is not None and self.allow_rolling:
            if template.template_id(self.scheme) != tid:
                raise StaleTemplate("template does not match the share's template id")
            for issued_id in self.rounds[self.current_round].templates if self.current_round in self.rounds else ():
                issued = self.templates[issued_id]
                if issued.with_time(template.time) == template:
                    self.templates[tid] = template
                    self.template_round[tid] = self.template_round[issued_id]
                    self.rolled_from[tid] = issued_id
                    return template
        raise StaleTemplate("share references a template the pool did not issue")

    def record_share(self, share: ShareRecord, template: TemplateHeader | None = None) -> ShareRecord:
        """Validate and store a share; raises a :class:`ShareRejected` subclass."""
        g = self._resolve_template(share, template)
        tid = share.template_id
        zero_pattern = share.pattern == BitPattern.zeros(g.difficulty)
        if share.pattern.pattern_id in self.audit_patterns.get(tid, ()):
            pass
        elif zero_pattern:
            round_no = self.template_round.get(tid)
            if round_no is None or round_no != self.current_round or not self.rounds[round_no].open:
                raise StaleTemplate("template belongs to a closed round")
        else:
            raise StaleTemplate("pattern is not active for this template")
        if hash_digest(embed_message(g, share.nonce), self.scheme) != share.digest:
            raise BadDigest("digest does not recompute from template and nonce")
        if share.pattern.length < self.share_difficulty or not matches_prefix(
                share.digest, share.pattern.prefix(self.share_difficulty)):
            raise BelowShareDifficulty("digest does not meet the share difficulty")
        key = (tid, share.nonce, share.pattern.pattern_id)
        if key in self._seen:
            raise Duplicate("share already submitted")
        self._seen.add(key)
        self.shares.append(share)
        self._by_miner_template[(share.miner, tid)].append(share)
        return share

    def reported_shares(self, miner: str, template_id: bytes) -> list[ShareRecord]:
        return self._by_miner_template.get((miner, template_id), [])

    def shares_of(self, miner: str) -> list[ShareRecord]:
        return [s for s in self.shares if s.miner == miner]

    # search spaces

    def _auditable_units(self, miner: str, round_number: int, pattern: BitPattern | None) -> list[AuditableWorkUnit]:
        units = [u for u in self.units_for(round_number) if u.assigned_to == miner
                 and (pattern is None or u.pattern == pattern)]
        groups: dict[tuple[bytes, BitPattern], list[WorkUnit]] = defaultdict(list)
        for u in units:
            groups[(u.template.template_id(self.scheme), u.pattern)].append(u)
        out: list[AuditableWorkUnit] = []
        for (tid, p), group in groups.items():
            group.sort(key=lambda u: u.range.start)
            merged: list[WorkUnit] = []
            for u in group:
                if merged and merged[-1].range.end + 1 >= u.range.start:
                    prev = merged[-1]
                    merged[-1] = WorkUnit(prev.template, NonceRange(prev.range.start, max(prev.range.end, u.range.end)),
                                          miner, round_number, p)
                else:
                    merged.append(u)
            shares = [s for s in self.reported_shares(miner, tid) if s.pattern == p]
            for u in merged:
                cut = truncate_to_last_share(u, [s for s in shares if s.nonce in u.range])
                if cut is not None:
                    out.append(cut)
        out.sort(key=lambda a: (a.template.height, a.template.time, a.range.start))
        return out

    def search_space(self, miner: str, round_number: int, pattern: BitPattern | None = None) -> SearchSpace:
        """Auditable units of ``miner`` in a round, each cut at its last share.

        Contiguous units on the same template are merged first, since a miner
        only requests a new range after finishing the previous one.
        """
        return SearchSpace(miner, round_number, tuple(self._auditable_units(miner, round_number, pattern)))

    def search_spaces(self, miner: str, round_number: int, pattern: BitPattern | None = None) -> list[SearchSpace]:
        """Like :meth:`search_space`, split by template parent.

        Work done while v-mining in one round can cover templates of several
        earlier heights, which do not form a single search space.
        """
        by_parent: dict[bytes, list[AuditableWorkUnit]] = defaultdict(list)
        for u in self._auditable_units(miner, round_number, pattern):
            by_parent[u.template.parent].append(u)
        return [SearchSpace(miner, round_number, tuple(v)) for v in by_parent.values()]


def export_shares(shares: Iterable[ShareRecord], fp) -> None:
    for s in shares:
        fp.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")
