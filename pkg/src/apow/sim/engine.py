"""Tick-based simulator wiring miners, the pool, audits and the chain.

Every digest is computed for real. Each tick every miner scans
``hashrate`` nonces of its current job; miners take turns in an order that
rotates with the tick so no miner is systematically first. A round ends
when a block or v-block extends the chain.

All ledger changes are emitted as events and applied through
:func:`apply_ledger_event`, so replaying the event log rebuilds the ledger.
"""
from __future__ import annotations

import hashlib
import io
import json
import random
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field

from ..chain import (
    ATTRIBUTION_AUDITOR, ATTRIBUTION_POOL, ATTRIBUTION_ZK_STUB, Block, ChainState, ValidationError,
    VBlock, VBlockPayload, append, export_chain, genesis, load_items, revalidate, validate,
)
from ..header import TemplateHeader
from ..keys import KeyPair
from ..pool import (
    Accountant, AuditorSet, EvidenceRecord, Ledger, PenaltyPolicy, Verdict, adjudicate_evidence,
    apply_penalty, auditor_index, mature_rewards, share_ratio,
)
from ..pow_core import (
    BitPattern, NonceRange, derive_b2, embed_message, hash_digest, matches_prefix, pattern_scan, vmine_scan,
)
from ..strategies import AUDIT, MINE, ActionKind, Hit, MinerObservation, make_strategy
from ..workunits import AuditSlice, PoolState, ShareRecord, ShareRejected, WorkUnit, select_audit_subset
from .config import SimConfig

LEDGER_EVENTS = ("share", "block", "vblock_reward", "penalty", "mature")


class InvariantViolation(Exception):
    pass


@dataclass
class AuditJob:
    slices: list[AuditSlice]
    audited_round: int
    recursive: bool
    index: int = 0
    pos: int | None = None

    @property
    def done(self) -> bool:
        return self.index >= len(self.slices)


@dataclass
class _Miner:
    name: str
    hashrate: int
    strategy: object
    key: KeyPair
    unit: object = None
    template: TemplateHeader | None = None
    pos: int = 0
    jobs: deque = field(default_factory=deque)
    registered: tuple | None = None
    scanned: Counter = field(default_factory=Counter)
    accepted: Counter = field(default_factory=Counter)


@dataclass
class MetricsReport:
    data: dict

    @property
    def ok(self) -> bool:
        return not self.data["violations"]

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    def __getitem__(self, key):
        return self.data[key]


def apply_ledger_event(acct: Accountant, ev: dict, rho, policy: PenaltyPolicy, routing: str, prize: int):
    t = ev["type"]
    if t == "share":
        return acct.credit_share(ev["miner"], ev["height"], rho)
    if t == "block":
        return acct.distribute_block_reward(ev["height"], ev["value"], ev["fees"])
    if t == "vblock_reward":
        ref = acct.block_distribution(ev["reference"]) if ev.get("reference") else None
        return acct.distribute_vblock_reward(ev["height"], ev["value"], routing, ref, ev.get("auditor"), prize)
    if t == "penalty":
        return apply_penalty(acct.ledger, ev["miner"], policy)
    if t == "mature":
        return mature_rewards(acct.ledger, ev["height"])
    return None


def _txroot(seed, height: int, refresh: int, who: str) -> bytes:
    return hashlib.sha256(f"txs:{seed}:{who}:{height}:{refresh}".encode()).digest()


class Simulation:
    def __init__(self, config: SimConfig):
        self.cfg = config.validate()
        c = self.cfg
        self.params = c.chain_params()
        self.scheme = c.hash_scheme
        self.dp = c.share_difficulty
        self.rho = share_ratio(c.share_difficulty, c.d)
        self.zero_full = BitPattern.zeros(c.d)
        self.zero_share = BitPattern.zeros(c.share_difficulty)
        self.policy = c.penalty_policy()
        self.pool_key = KeyPair.from_seed(f"{c.seed}:pool")
        self.ext_key = KeyPair.from_seed(f"{c.seed}:external")
        self.miners = [
            _Miner(m.name, m.hashrate, make_strategy(m.strategy, **m.params), KeyPair.from_seed(f"{c.seed}:miner:{m.name}"))
            for m in c.miners
        ]
        self.by_name = {m.name: m for m in self.miners}
        self.auditor_set = AuditorSet(tuple(m.key.public for m in self.miners))
        self.chain: ChainState = genesis(self.params)
        self.pool = PoolState(c.share_difficulty, c.unit_size, c.allow_rolling, self.scheme)
        self.acct = Accountant(c.payout_scheme(), c.payout.subsidy, c.payout.retention)
        self.events: list[dict] = []
        self.tick = 0
        self._order = random.Random(f"{c.seed}:order")
        self._ended = False
        self._draining = False
        self._logged_templates: set[bytes] = set()
        self._pending_payloads: list[VBlockPayload] = []
        self._last_pool_block: bytes | None = None
        self._block_height_by_id: dict[bytes, int] = {}
        self.template: TemplateHeader | None = None
        self.template_tick = 0
        self.refresh = 0
        self.ext_template: TemplateHeader | None = None
        self.ext_pos = 0
        self.stats = Counter()
        self.rejected = Counter()
        self.vblock_rejections = Counter()
        self.verdicts = Counter()
        self.guilty = Counter()
        self.suppressed = Counter()
        self.suppress_keys: dict[tuple[bytes, int], tuple[str, BitPattern]] = {}
        self.detected: set[tuple[bytes, int]] = set()
        self._audited_spans: dict[tuple[str, bytes, BitPattern], list[NonceRange]] = defaultdict(list)
        self.b2_cache: dict[int, BitPattern] = {}

    # events

    def _emit(self, type_: str, **fields) -> dict:
        ev = {"seq": len(self.events), "tick": self.tick, "type": type_, **fields}
        self.events.append(ev)
        if type_ in LEDGER_EVENTS:
            apply_ledger_event(self.acct, ev, self.rho, self.policy, self.cfg.payout.vblock_routing,
                               self.cfg.payout.auditor_prize)
        return ev

    def _log_template(self, g: TemplateHeader) -> str:
        tid = g.template_id(self.scheme)
        if tid not in self._logged_templates:
            self._logged_templates.add(tid)
            self._emit("template", id=tid.hex(), header=g.to_dict())
        return tid.hex()

    # rounds and templates

    @property
    def round(self) -> int:
        return self.chain.height + 1

    def _b2(self, j: int) -> BitPattern:
        if j not in self.b2_cache:
            self.b2_cache[j] = derive_b2(self.chain.id_at(j - 1), self.cfg.d, self.scheme)
        return self.b2_cache[j]

    def _pool_template(self) -> TemplateHeader:
        j = self.round
        return TemplateHeader(
            1, self.chain.tip_id, _txroot(self.cfg.seed, j, self.refresh, "pool"), j, self.tick, self.cfg.d,
            self.pool_key.address, self.auditor_set.root, self._last_pool_block,
        )

    def _start_round(self) -> None:
        j = self.round
        self._emit("mature", height=self.chain.height)
        self.pool.open_round(j)
        self.refresh = 0
        self._issue_template()
        self.ext_template = TemplateHeader(
            1, self.chain.tip_id, _txroot(self.cfg.seed, j, 0, "external"), j, self.tick, self.cfg.d,
            self.ext_key.address,
        )
        self.ext_pos = 0
        if j >= 2:
            self._schedule_audits(j - 1)
        for m in self.miners:
            self._expire(m)
            m.unit = None

    def _issue_template(self) -> None:
        self.template = self._pool_template()
        self.template_tick = self.tick
        self.pool.issue_template(self.template)
        self._log_template(self.template)

    def _refresh_template(self) -> None:
        self.refresh += 1
        self._issue_template()
        for m in self.miners:
            if not m.jobs:
                self._expire(m)
                m.unit = None

    def _expire(self, m: _Miner) -> None:
        actions = m.strategy.step(MinerObservation(m.unit, MINE, tip=self.chain.tip_id, time=self.tick,
                                                   template_expired=True))
        self._apply(m, actions, MINE, None)

    # auditing

    def _select(self, i: int) -> int:
        n = len(self.miners)
        if self.cfg.audit.rotation == "round_robin":
            return i % n
        return auditor_index(self.chain.id_at(i), n)

    def _auditor_for(self, owner: str, auditors: list[str], slot: int) -> str | None:
        banned = self.acct.ledger.banned
        name = auditors[slot % len(auditors)]
        if name != owner and name not in banned:
            return name
        # backup: the next roster member that is neither the owner nor banned
        start = [m.name for m in self.miners].index(name)
        for step in range(1, len(self.miners)):
            cand = self.miners[(start + step) % len(self.miners)].name
            if cand != owner and cand not in banned:
                return cand
        return None

    def _schedule_audits(self, i: int) -> None:
        a = self.cfg.audit
        if not a.enabled:
            return
        first = self._select(i)
        n = len(self.miners)
        auditors = [self.miners[(first + k) % n].name for k in range(a.auditors_per_round)]
        kinds = [(False, self.zero_full, a.coverage)]
        if a.recursive:
            kinds.append((True, self._b2(i), a.recursive_coverage))
        slot = 0
        for m in self.miners:
            if m.name in self.acct.ledger.banned:
                continue
            for recursive, pattern, coverage in kinds:
                for space in self.pool.search_spaces(m.name, i, pattern):
                    auditor = self._auditor_for(m.name, auditors, slot)
                    slot += 1
                    if auditor is None:
                        continue
                    for u in space.units:
                        self._audited_spans[(m.name, u.template.template_id(self.scheme), u.pattern)].append(u.range)
                    tag = "r" if recursive else "m"
                    subset = select_audit_subset(space, coverage, f"{self.cfg.seed}:audit:{i}:{m.name}:{tag}:{space.units[0].template.parent.hex()}", a.granule)
                    if not subset:
                        continue
                    self.by_name[auditor].jobs.append(AuditJob(subset, i, recursive))
                    self._emit("audit_assigned", auditor=auditor, accused=m.name, round=i, recursive=recursive,
                               nonces=sum(len(s.range) for s in subset), space=space.total_length)

    # work

    def _assign(self, m: _Miner) -> None:
        m.unit = self.pool.assign_work(m.name, self.round, self.template)
        m.template = m.unit.template
        m.pos = m.unit.range.start

    def _miner_work(self, m: _Miner) -> None:
        if m.name in self.acct.ledger.banned:
            return
        budget = m.hashrate
        while budget > 0:
            if self._ended and not self._next_round():
                return
            if self._draining and not m.jobs:
                return
            if m.jobs:
                budget -= self._audit_step(m, budget)
            else:
                budget -= self._mine_step(m, budget)

    def _mine_step(self, m: _Miner, budget: int) -> int:
        if m.unit is None or m.pos > m.unit.range.end:
            self._assign(m)
        r = NonceRange(m.pos, min(m.pos + budget - 1, m.unit.range.end))
        shares, full = [], []
        for n, dg in pattern_scan(m.template, r, self.zero_share, self.scheme):
            (full if matches_prefix(dg, self.zero_full) else shares).append(Hit(n, dg, m.template, source=m.unit))
        obs = MinerObservation(m.unit, MINE, tuple(shares), tuple(full), (), self.chain.tip_id, self.tick)
        stop = self._apply(m, m.strategy.step(obs), MINE, None)
        used = len(r) if stop is None else max(0, stop - m.pos + 1)
        m.scanned[MINE] += used
        m.pos += used
        return used

    def _audit_step(self, m: _Miner, budget: int) -> int:
        job: AuditJob = m.jobs[0]
        j = self.round
        if job.done or j - job.audited_round > self.cfg.audit.max_age:
            if not job.done:
                self._emit("audit_expired", auditor=m.name, round=job.audited_round)
            m.jobs.popleft()
            m.registered = None
            return 0
        sl = job.slices[job.index]
        if job.pos is None:
            job.pos = sl.range.start
        b2 = self._b2(j)
        key = (id(job), job.index, j)
        if m.registered != key:
            self.pool.register_unit(WorkUnit(sl.template, NonceRange(job.pos, sl.range.end), m.name, j, b2))
            self._log_template(sl.template)
            m.registered = key
        r = NonceRange(job.pos, min(job.pos + budget - 1, sl.range.end))
        b1 = sl.unit.pattern.prefix(self.dp)
        share_hits, audit_hits = vmine_scan(sl.template, r, b1, b2.prefix(self.dp), self.scheme)
        shares, full = [], []
        for n, dg in share_hits:
            (full if matches_prefix(dg, b2) else shares).append(Hit(n, dg, sl.template, source=sl.unit))
        audits = tuple(Hit(n, dg, sl.template, owner=sl.unit.owner, source=sl.unit) for n, dg in audit_hits)
        obs = MinerObservation(sl, AUDIT, tuple(shares), tuple(full), audits, self.chain.tip_id, self.tick)
        stop = self._apply(m, m.strategy.step(obs), AUDIT, (job, b2))
        used = len(r) if stop is None else max(0, stop - job.pos + 1)
        m.scanned[AUDIT] += used
        job.pos += used
        if job.pos > sl.range.end:
            job.index += 1
            job.pos = None
        return used

    def _external_work(self) -> None:
        budget = self.cfg.external_hashrate
        while budget > 0:
            if self._ended and not self._next_round():
                return
            r = NonceRange(self.ext_pos, self.ext_pos + budget - 1)
            hits = pattern_scan(self.ext_template, r, self.zero_full, self.scheme)
            used = len(r) if not hits else hits[0][0] - self.ext_pos + 1
            budget -= used
            self.ext_pos += used
            if hits:
                self._external_block(hits[0][0])

    def _external_block(self, nonce: int) -> None:
        block = Block(self.ext_template, nonce)
        self._log_template(self.ext_template)
        self.chain = append(self.chain, block, self.params)
        self.stats["external_blocks"] += 1
        self._emit("external_block", height=block.height, id=self.chain.tip_id.hex(),
                   template=self.ext_template.template_id(self.scheme).hex(), nonce=block.nonce)
        self._ended = True

    # actions

    def _apply(self, m: _Miner, actions, mode: str, ctx) -> int | None:
        """Carry out actions in order; returns the nonce the miner stopped at when
        the round ended or the timestamp rolled, otherwise None."""
        last = -1
        for a in actions:
            if self._ended:
                return last
            k, h = a.kind, a.payload
            if k in (ActionKind.IDLE, ActionKind.REQUEST_WORK):
                if k == ActionKind.REQUEST_WORK and mode == MINE:
                    m.unit = None
                continue
            if k == ActionKind.ROLL_TIMESTAMP:
                self._roll(m, h)
                return last
            last = max(last, h.nonce)
            if k == ActionKind.SUBMIT_SHARE:
                self._share(m, h, mode, ctx)
            elif k == ActionKind.SUBMIT_BLOCK:
                self._share(m, h, mode, ctx)
                self._pool_block(m, h)
            elif k == ActionKind.SUBMIT_VBLOCK:
                self._share(m, h, mode, ctx)
                self._vblock(m, h, ctx)
            elif k == ActionKind.REPORT_AUDIT_HIT:
                self._audit_hit(m, h)
            elif k == ActionKind.SUPPRESS_SOLUTION:
                self._suppress(m, h, mode)
        return last if self._ended else None

    def _share(self, m: _Miner, h: Hit, mode: str, ctx) -> bool:
        pattern = self.zero_full if mode == MINE else ctx[1]
        tid = h.template.template_id(self.scheme)
        rec = ShareRecord(m.name, tid, h.nonce, h.digest, pattern, self.tick, len(self.pool.shares))
        try:
            self.pool.record_share(rec, h.template)
        except ShareRejected as exc:
            self.rejected[type(exc).__name__] += 1
            self._emit("share_rejected", miner=m.name, template=tid.hex(), nonce=h.nonce, reason=type(exc).__name__)
            return False
        self._log_template(h.template)
        m.accepted[mode] += 1
        self._emit("share", miner=m.name, height=self.round, template=tid.hex(), nonce=h.nonce,
                   digest=h.digest.hex(), pattern=pattern.pattern_id, mode=mode)
        return True

    def _pool_block(self, m: _Miner, h: Hit) -> None:
        block = Block(h.template, h.nonce)
        included: list[VBlockPayload] = []
        try:
            new = append(self.chain, block, self.params)
        except ValidationError as exc:
            self._emit("block_rejected", miner=m.name, nonce=h.nonce, reason=type(exc).__name__)
            return
        for p in list(self._pending_payloads):
            try:
                new = append(self.chain, block, self.params, included + [p])
                included.append(p)
            except ValidationError as exc:
                self._emit("vblock_tx_dropped", vmined_height=p.vmined_height, nonce=p.nonce, reason=type(exc).__name__)
        if included:
            new = append(self.chain, block, self.params, included)
        self._pending_payloads = []
        self.chain = new
        bid = new.tip_id
        self._last_pool_block = bid
        self._block_height_by_id[bid] = block.height
        self.stats["pool_blocks"] += 1
        p = self.cfg.payout
        self._emit("block", miner=m.name, height=block.height, id=bid.hex(),
                   template=h.template.template_id(self.scheme).hex(), nonce=h.nonce,
                   value=p.subsidy + p.fees, fees=p.fees)
        for payload in included:
            self.stats["vblock_txs"] += 1
            self._emit("vblock_tx", height=block.height, vmined_height=payload.vmined_height,
                       template=self._log_template(payload.template), nonce=payload.nonce)
            self._vblock_reward(block.height, payload.template, None)
        self._ended = True

    def _vblock_reward(self, height: int, g_i: TemplateHeader, auditor: str | None) -> None:
        if self.params.attribution != ATTRIBUTION_POOL:
            return
        ref = None
        if self.cfg.payout.vblock_routing == "last_block" and g_i.last_block is not None:
            ref = self._block_height_by_id.get(g_i.last_block)
        self._emit("vblock_reward", height=height, value=self.cfg.payout.vblock_reward, reference=ref, auditor=auditor)

    def _vblock(self, m: _Miner, h: Hit, ctx) -> None:
        job, _ = ctx
        g_i = h.template
        j = self.round
        self.stats["b2_solutions"] += 1
        mode = self.cfg.chain.vblocks
        if self._draining:
            self._emit("vblock_skipped", miner=m.name, template=self._log_template(g_i), nonce=h.nonce, height=j)
            return
        if mode == "none":
            self._emit("vblock_unsealed", miner=m.name, template=self._log_template(g_i), nonce=h.nonce, height=j)
            return
        if mode == "scheme2c":
            self._pending_payloads.append(VBlockPayload(g_i, h.nonce, j))
            self._emit("vblock_payload", miner=m.name, template=self._log_template(g_i), nonce=h.nonce, vmined_height=j)
            return
        attribution = self.params.attribution
        proof = claimant = None
        if attribution == ATTRIBUTION_AUDITOR:
            proof = self.auditor_set.proof([x.name for x in self.miners].index(m.name))
        elif attribution == ATTRIBUTION_ZK_STUB:
            claimant = m.key.public
        v = VBlock(g_i.height, g_i, h.nonce, j, self.template, auditor_proof=proof,
                   recursive_round=job.audited_round if job.recursive else None, claimant=claimant)
        v = v.sealed(self.pool_key if attribution == ATTRIBUTION_POOL else m.key)
        try:
            validate(self.chain, v, self.params)
        except ValidationError as exc:
            self.vblock_rejections[type(exc).__name__] += 1
            self._emit("vblock_rejected", miner=m.name, audited_height=g_i.height, nonce=h.nonce, height=j,
                       recursive_round=v.recursive_round, reason=type(exc).__name__)
            return
        self.chain = append(self.chain, v, self.params)
        self.stats["vblocks"] += 1
        self._emit("vblock", miner=m.name, height=j, id=self.chain.tip_id.hex(), audited_height=g_i.height,
                   template=self._log_template(g_i), nonce=h.nonce, recursive_round=v.recursive_round)
        self._vblock_reward(j, g_i, m.name)
        self._ended = True

    def _audit_hit(self, m: _Miner, h: Hit) -> None:
        unit = h.source
        pattern = unit.pattern.prefix(self.dp)
        tid = unit.template.template_id(self.scheme)
        reported = self.pool.reported_shares(unit.owner, tid)
        if any(s.nonce == h.nonce and s.pattern == unit.pattern for s in reported):
            self.stats["audit_confirmations"] += 1
            return
        e = EvidenceRecord(unit, h.nonce, h.digest, pattern, m.name)
        verdict = adjudicate_evidence(e, reported, self.policy, None, self.scheme)
        self.verdicts[verdict.value] += 1
        self._log_template(unit.template)
        self._emit("evidence", verdict=verdict.value, **e.to_dict(self.scheme))
        if verdict == Verdict.GUILTY:
            self.guilty[unit.owner] += 1
            if self.suppress_keys.get((tid, h.nonce), (None, None))[1] == unit.pattern:
                self.detected.add((tid, h.nonce))
            self._emit("penalty", miner=unit.owner, reporter=m.name, template=tid.hex(), nonce=h.nonce)
            if unit.owner in self.acct.ledger.banned:
                # a banned worker gets no more work, audit jobs included
                self.by_name[unit.owner].jobs.clear()

    def _suppress(self, m: _Miner, h: Hit, mode: str) -> None:
        tid = h.template.template_id(self.scheme)
        self._log_template(h.template)
        self.suppressed[m.name] += 1
        pattern = self.zero_full if mode == MINE else self._b2(self.round)
        self.suppress_keys[(tid, h.nonce)] = (m.name, pattern)
        self._emit("suppress", hidden=True, miner=m.name, template=tid.hex(), nonce=h.nonce,
                   digest=h.digest.hex(), mode=mode, height=self.round)

    def _roll(self, m: _Miner, t: int) -> None:
        if not self.cfg.allow_rolling:
            self.stats["rolls_refused"] += 1
            self._emit("roll_refused", miner=m.name, time=t)
            return
        m.template = m.template.with_time(t)
        self.stats["rolls"] += 1
        self._emit("roll", miner=m.name, time=t, template=self._log_template(m.template))

    # main loop

    def run(self) -> MetricsReport:
        cfg = self.cfg
        self._start_round()
        participants = self.miners + [None]
        while self.chain.height < cfg.rounds:
            if self.tick >= cfg.max_ticks:
                self.stats["tick_limit"] = 1
                break
            self.tick += 1
            if self.tick - self.template_tick >= cfg.template_lifetime:
                self._refresh_template()
            # a seeded shuffle keeps any participant from systematically hashing
            # first or last within a tick
            order = participants[:]
            self._order.shuffle(order)
            for p in order:
                if self.chain.height >= cfg.rounds:
                    break
                if p is None:
                    self._external_work()
                else:
                    self._miner_work(p)
            if self._ended:
                self._next_round()
        if cfg.audit.enabled and cfg.audit.drain and not self.stats.get("tick_limit"):
            self._drain()
        self._emit("mature", height=self.chain.height)
        return self.report()

    def _next_round(self) -> bool:
        """Open the next round after a block; False once the run is over."""
        if self._draining or self.chain.height >= self.cfg.rounds:
            return False
        self._start_round()
        self._ended = False
        return True

    def _drain(self) -> None:
        """Finish outstanding audits after the last round; no new blocks are mined."""
        self._draining = True
        self._ended = False
        self.pool.open_round(self.round)
        self._schedule_audits(self.chain.height)
        while any(m.jobs for m in self.miners) and self.tick < self.cfg.max_ticks:
            self.tick += 1
            for m in self.miners:
                self._miner_work(m)
        self._draining = False

    # checks and report

    def event_log(self) -> str:
        return "".join(json.dumps(ev, sort_keys=True) + "\n" for ev in self.events)

    def replay_ledger(self) -> Accountant:
        return replay(self.cfg, self.events)

    def _check_chain(self) -> bool:
        buf = io.StringIO()
        export_chain(self.chain, buf, self.params)
        buf.seek(0)
        try:
            again = revalidate(load_items(buf), self.params)
        except ValidationError:
            return False
        return again.ids == self.chain.ids

    def _check_hashing(self) -> bool:
        templates: dict[str, TemplateHeader] = {}
        for ev in self.events:
            t = ev["type"]
            if t == "template":
                g = TemplateHeader.from_dict(ev["header"])
                if g.template_id(self.scheme).hex() != ev["id"]:
                    return False
                templates[ev["id"]] = g
            elif t in ("share", "suppress"):
                g = templates.get(ev["template"])
                if g is None or hash_digest(embed_message(g, ev["nonce"]), self.scheme).hex() != ev["digest"]:
                    return False
                pattern = BitPattern.from_id(ev["pattern"]).prefix(self.dp) if t == "share" else self.zero_share
                if t == "suppress" and ev["mode"] == AUDIT:
                    pattern = None
                if pattern is not None and not matches_prefix(bytes.fromhex(ev["digest"]), pattern):
                    return False
            elif t == "evidence":
                g = templates.get(ev["template_id"])
                if g is None or hash_digest(embed_message(g, ev["nonce"]), self.scheme).hex() != ev["digest"]:
                    return False
                if not matches_prefix(bytes.fromhex(ev["digest"]), BitPattern.from_id(ev["pattern"])):
                    return False
        return True

    def auditable_suppressions(self) -> set[tuple[bytes, int]]:
        """Suppressed solutions inside an interval that was put up for audit (at any coverage)."""
        spans = self._audited_spans
        return {key for key, (miner, pattern) in self.suppress_keys.items()
                if any(key[1] in rng for rng in spans.get((miner, key[0], pattern), ()))}

    def report(self) -> MetricsReport:
        led = self.acct.ledger
        violations = []
        false_acc = sum(1 for miner in self.guilty if self.suppressed[miner] == 0)
        if false_acc:
            violations.append("false_accusation")
        conserved = all(d.conserved() for d in self.acct.distributions) and led.total() == led.received
        if not conserved:
            violations.append("conservation")
        replayed = self.replay_ledger()
        replay_ok = (replayed.ledger.snapshot() == led.snapshot()
                     and [d.to_dict() for d in replayed.distributions] == [d.to_dict() for d in self.acct.distributions])
        if not replay_ok:
            violations.append("replay")
        chain_ok = self._check_chain()
        if not chain_ok:
            violations.append("chain_revalidation")
        hashing_ok = self._check_hashing()
        if not hashing_ok:
            violations.append("hashing_fidelity")
        auditable = self.auditable_suppressions()
        if not self.detected <= auditable:
            violations.append("detection_outside_audited_intervals")
        if self.stats.get("tick_limit"):
            violations.append("tick_limit")

        names = [m.name for m in self.miners]
        kinds = Counter(item.kind for item in self.chain.items[1:])
        data = {
            "name": self.cfg.name,
            "seed": self.cfg.seed,
            "ticks": self.tick,
            "height": self.chain.height,
            "tip": self.chain.tip_id.hex(),
            "chain": {"blocks": kinds.get("block", 0), "vblocks": kinds.get("vblock", 0),
                      "vblock_txs": len(self.chain.vblock_txs), "pool_blocks": self.stats["pool_blocks"],
                      "external_blocks": self.stats["external_blocks"]},
            "pool_block_rate": self.stats["pool_blocks"] / self.tick if self.tick else 0.0,
            "pool_revenue": self.acct.block_revenue,
            "income": {n: led.income(n) for n in names},
            "hashrate": {m.name: m.hashrate for m in self.miners},
            "scanned": {m.name: dict(sorted(m.scanned.items())) for m in self.miners},
            "accepted_shares": {m.name: dict(sorted(m.accepted.items())) for m in self.miners},
            "rejected_shares": dict(sorted(self.rejected.items())),
            "suppressed": {n: self.suppressed[n] for n in names},
            "suppressed_total": sum(self.suppressed.values()),
            "evidence": sum(self.verdicts.values()),
            "verdicts": dict(sorted(self.verdicts.items())),
            "guilty": {n: self.guilty[n] for n in names if self.guilty[n]},
            "suppressed_auditable": len(auditable),
            "detected": len(self.detected),
            "false_accusations": false_acc,
            "audit_confirmations": self.stats["audit_confirmations"],
            "b2_solutions": self.stats["b2_solutions"],
            "vblock_rejections": dict(sorted(self.vblock_rejections.items())),
            "rolls": self.stats["rolls"],
            "rolls_refused": self.stats["rolls_refused"],
            "ledger": led.snapshot(),
            "checks": {"conservation": conserved, "replay": replay_ok, "chain_revalidation": chain_ok,
                       "hashing_fidelity": hashing_ok, "false_accusations": false_acc == 0},
            "violations": violations,
        }
        return MetricsReport(data)


def replay(cfg: SimConfig, events) -> Accountant:
    """Rebuild the pool ledger from an event log."""
    acct = Accountant(cfg.payout_scheme(), cfg.payout.subsidy, cfg.payout.retention, Ledger())
    rho = share_ratio(cfg.share_difficulty, cfg.d)
    for ev in events:
        apply_ledger_event(acct, ev, rho, cfg.penalty_policy(), cfg.payout.vblock_routing, cfg.payout.auditor_prize)
    return acct


def run(config: SimConfig) -> tuple[MetricsReport, Simulation]:
    sim = Simulation(config)
    return sim.run(), sim


def read_events(path) -> list[dict]:
    with open(path) as fp:
        return [json.loads(line) for line in fp if line.strip()]

