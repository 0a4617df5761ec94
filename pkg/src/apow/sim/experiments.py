"""Experiment drivers; each returns table rows plus the reports it ran."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import asdict, dataclass, field

from ..header import ZERO_DIGEST, TemplateHeader
from ..keys import KeyPair
from ..pool import SCHEMES, EvidenceRecord, Verdict, adjudicate_evidence
from ..pow_core import BitPattern, NonceRange, derive_b2, matches_prefix, pattern_scan, vmine_scan
from ..strategies import AUDIT, MINE, ActionKind, Hit, MinerObservation, make_strategy
from ..workunits import PoolState, ShareRecord, ShareRejected, select_audit_subset
from .config import ConfigError, SimConfig
from .engine import MetricsReport, replay, run


@dataclass
class ExperimentResult:
    rows: list[dict]
    reports: list[MetricsReport] = field(default_factory=list)

    @property
    def violations(self) -> list[str]:
        return [v for r in self.reports for v in r["violations"]]

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, mid - half), min(1.0, mid + half)


def _names(cfg: SimConfig, strategy: str) -> list[str]:
    return [m.name for m in cfg.miners if m.strategy == strategy]


def _with_strategy(cfg: SimConfig, names, strategy: str, **changes) -> SimConfig:
    miners = [dict(asdict(m), strategy=strategy, params={}) if m.name in names else asdict(m) for m in cfg.miners]
    return cfg.replace(miners=miners, **changes)


# detection

def experiment_detection(config: SimConfig, coverages=(0.1, 0.25, 0.5, 1.0), min_events: int = 10_000,
                         chunk: int = 1 << 16) -> ExperimentResult:
    """Catch rate of withheld solutions as a function of audit coverage.

    A single withholder mines one pool-assigned unit per round; afterwards
    each round's search space is audited at every coverage and unreported
    hits are adjudicated. Only solutions inside an auditable interval count
    as events.
    """
    names = _names(config, "withholder")
    if not names:
        raise ConfigError("detection experiment needs a withholder in the roster")
    spec = next(m for m in config.miners if m.name == names[0])
    d, dp, scheme = config.d, config.share_difficulty, config.hash_scheme
    zero_share, zero_full = BitPattern.zeros(dp), BitPattern.zeros(d)
    pool = PoolState(dp, config.unit_size, False, scheme)
    strategy = make_strategy("withholder", **spec.params)
    address = KeyPair.from_seed(f"{config.seed}:pool").address
    suppressed: dict[bytes, list[int]] = {}
    templates = []
    events = 0
    r = 0
    while events < min_events:
        r += 1
        pool.open_round(r)
        parent = hashlib.sha256(f"detection:{config.seed}:{r}".encode()).digest()
        g = TemplateHeader(1, parent, ZERO_DIGEST, r, r, d, address)
        tid = pool.issue_template(g)
        unit = pool.assign_work(spec.name, r, g)
        hidden = suppressed.setdefault(tid, [])
        pos = unit.range.start
        while pos <= unit.range.end:
            rng = NonceRange(pos, min(pos + chunk - 1, unit.range.end))
            shares, full = [], []
            for n, dg in pattern_scan(g, rng, zero_share, scheme):
                (full if matches_prefix(dg, zero_full) else shares).append(Hit(n, dg, g, source=unit))
            obs = MinerObservation(unit, MINE, tuple(shares), tuple(full))
            for a in strategy.step(obs):
                if a.kind in (ActionKind.SUBMIT_SHARE, ActionKind.SUBMIT_BLOCK):
                    h = a.payload
                    try:
                        pool.record_share(ShareRecord(spec.name, tid, h.nonce, h.digest, zero_full, r))
                    except ShareRejected:
                        pass
                elif a.kind == ActionKind.SUPPRESS_SOLUTION:
                    hidden.append(a.payload.nonce)
            pos = rng.end + 1
        for a in strategy.step(MinerObservation(unit, MINE, template_expired=True)):
            if a.kind == ActionKind.SUPPRESS_SOLUTION:
                hidden.append(a.payload.nonce)
        pool.close_round(r)
        reported = pool.reported_shares(spec.name, tid)
        last = max((s.nonce for s in reported), default=-1)
        events += sum(1 for n in hidden if n <= last)
        templates.append((r, g, tid))

    rows = []
    for f in coverages:
        caught = total = 0
        for r, g, tid in templates:
            by_nonce: dict[int, list[ShareRecord]] = {}
            for s in pool.reported_shares(spec.name, tid):
                by_nonce.setdefault(s.nonce, []).append(s)
            space = pool.search_space(spec.name, r)
            if not space.units:
                continue
            last = space.units[-1].range.end
            hidden = {n for n in suppressed[tid] if n <= last}
            total += len(hidden)
            b2 = derive_b2(tid, d, scheme).prefix(dp)
            for sl in select_audit_subset(space, f, f"{config.seed}:detection:{r}:{f}", config.audit.granule):
                _, audit_hits = vmine_scan(sl.template, sl.range, zero_share, b2, scheme)
                for n, dg in audit_hits:
                    if n in by_nonce:
                        continue
                    e = EvidenceRecord(sl.unit, n, dg, zero_share, "auditor")
                    if adjudicate_evidence(e, by_nonce.get(n, []), scheme=scheme) == Verdict.GUILTY and n in hidden:
                        caught += 1
        lo, hi = wilson_interval(caught, total)
        rows.append({"coverage": f, "events": total, "caught": caught,
                     "rate": caught / total if total else 0.0, "ci_low": lo, "ci_high": hi})
    return ExperimentResult(rows)


# block withholding profitability

def experiment_bwa_profitability(base: SimConfig, schemes=SCHEMES) -> ExperimentResult:
    """Withholder income and pool revenue under each payout scheme.

    One attack run and one baseline run (the withholder mining honestly)
    are simulated with auditing disabled; both event logs are then replayed
    under every scheme. Income is normalised per unit hashrate per tick.
    """
    attack = base.replace(**{"audit.enabled": False})
    withholders = _names(attack, "withholder")
    if not withholders:
        raise ConfigError("BWA experiment needs a withholder in the roster")
    baseline = _with_strategy(attack, withholders, "honest")
    rep_a, sim_a = run(attack)
    rep_b, sim_b = run(baseline)
    rate = {m.name: m.hashrate for m in attack.miners}
    w_rate = sum(rate[w] for w in withholders)
    all_rate = sum(rate.values())
    rows = []
    for s in schemes:
        acct_a = replay(attack.replace(**{"payout.scheme": s}), sim_a.events)
        acct_b = replay(baseline.replace(**{"payout.scheme": s}), sim_b.events)
        w_income = sum(acct_a.ledger.income(w) for w in withholders) / w_rate / sim_a.tick
        base_income = sum(acct_b.ledger.income(m) for m in rate) / all_rate / sim_b.tick
        revenue = (acct_a.block_revenue / sim_a.tick) / (acct_b.block_revenue / sim_b.tick)
        rows.append({"scheme": s, "income_ratio": w_income / base_income if base_income else 0.0,
                     "pool_revenue_ratio": revenue, "attack_ticks": sim_a.tick, "baseline_ticks": sim_b.tick,
                     "attack_pool_blocks": rep_a["chain"]["pool_blocks"],
                     "baseline_pool_blocks": rep_b["chain"]["pool_blocks"],
                     "suppressed": rep_a["suppressed_total"]})
    return ExperimentResult(rows, [rep_a, rep_b])


# timestamp rolling

def _mined_detection(sim, miners) -> tuple[int, int, int]:
    """Suppressed mined solutions, those followed by a later share of the same
    miner in the same work unit (whatever timestamp it carried), and the
    number of those that were caught."""
    size = sim.cfg.unit_size
    last_share: dict[tuple[str, int, int], int] = {}
    suppressed = []
    for ev in sim.events:
        if ev.get("mode") != MINE or ev.get("miner") not in miners:
            continue
        unit = (ev["miner"], ev["height"], ev["nonce"] // size)
        if ev["type"] == "share":
            last_share[unit] = max(last_share.get(unit, -1), ev["nonce"])
        elif ev["type"] == "suppress":
            suppressed.append((unit, (bytes.fromhex(ev["template"]), ev["nonce"])))
    covered = {key for unit, key in suppressed if last_share.get(unit, -1) > key[1]}
    return len(suppressed), len(covered), len(covered & sim.detected)


def experiment_timestamp_rolling(config: SimConfig) -> ExperimentResult:
    rollers = _names(config, "roller")
    rows, reports = [], []
    for allowed in (False, True):
        rep, sim = run(config.replace(allow_rolling=allowed))
        reports.append(rep)
        suppressed, covered, detected = _mined_detection(sim, rollers)
        lo, hi = wilson_interval(detected, covered)
        rows.append({"rolling_allowed": allowed, "coverage": config.audit.coverage, "suppressed": suppressed,
                     "covered": covered, "detected": detected, "rate": detected / covered if covered else 0.0,
                     "ci_low": lo, "ci_high": hi, "rolls": rep["rolls"], "rolls_refused": rep["rolls_refused"],
                     "guilty": sum(rep["guilty"].values()), "false_accusations": rep["false_accusations"]})
    return ExperimentResult(rows, reports)


# recursive auditing

def experiment_recursive_audit(config: SimConfig) -> ExperimentResult:
    cfg = config.replace(**{"audit.recursive": True})
    rep, sim = run(cfg)
    targets = _names(cfg, "vmining_withholder")
    keys = {(bytes.fromhex(ev["template"]), ev["nonce"]) for ev in sim.events
            if ev["type"] == "suppress" and ev["mode"] == AUDIT and ev["miner"] in targets}
    audited = keys & sim.auditable_suppressions()
    detected = len(audited & sim.detected)
    lo, hi = wilson_interval(detected, len(audited))
    recursive = sum(1 for ev in sim.events if ev["type"] == "vblock" and ev["recursive_round"] is not None)
    row = {"recursive_coverage": cfg.audit.recursive_coverage, "v_suppressed": len(keys), "v_audited": len(audited),
           "v_detected": detected, "v_detection_rate": detected / len(audited) if audited else 0.0,
           "ci_low": lo, "ci_high": hi,
           "vblocks": rep["chain"]["vblocks"], "recursive_vblocks": recursive,
           "depth_rejections": rep["vblock_rejections"].get("DepthExceeded", 0),
           "guilty": sum(rep["guilty"].values()), "false_accusations": rep["false_accusations"]}
    return ExperimentResult([row], [rep])


# auditing without v-block rewards

def experiment_no_reward_auditing(config: SimConfig, bwa_loss_bound: int | None = None) -> ExperimentResult:
    """Share income of auditors versus miners, and what auditing costs the pool.

    Audit cost is the value of the b2 solutions found while v-mining, which
    would have been ordinary blocks had the same nonces been mined. The
    default loss bound is the block value a withholder with the smallest
    roster hashrate would take from the pool over the run.
    """
    cfg = config.replace(**{"payout.vblock_reward": 0})
    rep, sim = run(cfg)
    mine_n = sum(m.scanned[MINE] for m in sim.miners)
    audit_n = sum(m.scanned[AUDIT] for m in sim.miners)
    mine_s = sum(m.accepted[MINE] for m in sim.miners)
    audit_s = sum(m.accepted[AUDIT] for m in sim.miners)
    mine_rate = mine_s / mine_n if mine_n else 0.0
    audit_rate = audit_s / audit_n if audit_n else 0.0
    ratio = audit_rate / mine_rate if mine_rate else 0.0
    ratio_sd = ratio * math.sqrt(1 / max(audit_s, 1) + 1 / max(mine_s, 1))
    value = cfg.payout.subsidy + cfg.payout.fees
    spend = rep["b2_solutions"] * value
    if bwa_loss_bound is None:
        total = sum(m.hashrate for m in cfg.miners)
        smallest = min(m.hashrate for m in cfg.miners)
        bwa_loss_bound = rep["chain"]["pool_blocks"] * value * smallest // total
    row = {"mine_nonces": mine_n, "audit_nonces": audit_n, "mine_shares": mine_s, "audit_shares": audit_s,
           "share_income_ratio": ratio, "ratio_ci_low": ratio - 1.96 * ratio_sd,
           "ratio_ci_high": ratio + 1.96 * ratio_sd, "vblocks": rep["chain"]["vblocks"],
           "evidence": rep["evidence"], "audit_spend": spend, "bwa_loss_bound": bwa_loss_bound,
           "rational": spend < bwa_loss_bound}
    return ExperimentResult([row], [rep])


EXPERIMENTS = {
    "detection": experiment_detection,
    "bwa": experiment_bwa_profitability,
    "rolling": experiment_timestamp_rolling,
    "recursive": experiment_recursive_audit,
    "no_reward": experiment_no_reward_auditing,
}
