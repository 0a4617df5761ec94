from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apow.merkle import verify_merkle_proof
from apow.pool import (
    FPPS, PPLNS, PPS, PPS_PLUS, SCHEMES, SCORE, Accountant, AuditorSet, EvidenceRecord, Ledger, PayoutScheme,
    PenaltyPolicy, Verdict, adjudicate_evidence, auditor_index, mature_rewards, select_auditor, share_ratio,
    split_proportional,
)
from apow.pow_core import BitPattern, NonceRange, mine_scan
from apow.workunits import AuditableWorkUnit, ShareRecord, WorkUnit

from helpers import g0

COIN = 50 * 10**8
RHO = Fraction(1, 1024)


def acct(kind, **kw):
    return Accountant(PayoutScheme(kind, **kw), COIN, retention=100)


# payouts

def test_pps_credit_is_expected_value():
    a = acct(PPS)
    assert a.credit_share("m", 0, RHO) == COIN // 1024
    assert a.ledger.pending_of("m") == COIN // 1024
    assert a.ledger.pool_reserve == -(COIN // 1024)


def test_fpps_includes_expected_fees():
    a = acct(FPPS, expected_fees=5 * 10**8)
    assert a.credit_share("m", 0, RHO) == 55 * 10**8 // 1024


def test_pplns_share_has_no_immediate_credit():
    a = acct(PPLNS, N=10)
    assert a.credit_share("m", 0, RHO) == 0
    assert a.ledger.income("m") == 0 and len(a.window) == 1


def test_pplns_splits():
    a = acct(PPLNS, N=4)
    for _ in range(4):
        a.credit_share("m", 0, RHO)
    d = a.distribute_block_reward(1, COIN)
    assert d.credits == {"m": COIN} and d.conserved()
    for m in ("x", "y", "x", "y"):
        a.credit_share(m, 1, RHO)
    d = a.distribute_block_reward(2, COIN)
    assert d.credits == {"x": COIN // 2, "y": COIN // 2}


def test_pps_block_goes_to_reserve():
    a = acct(PPS)
    a.credit_share("m", 0, RHO)
    before = a.ledger.income("m")
    d = a.distribute_block_reward(1, COIN)
    assert d.credits == {} and d.reserve_delta == COIN
    assert a.ledger.income("m") == before


def test_pps_plus_splits_fees_only():
    a = acct(PPS_PLUS, N=10)
    a.credit_share("x", 0, RHO)
    a.credit_share("y", 0, RHO)
    d = a.distribute_block_reward(1, COIN + 1000, fees=1000)
    assert d.credits == {"x": 500, "y": 500}
    assert d.reserve_delta == COIN


def test_score_favours_recent_shares():
    a = acct(SCORE, half_life=2)
    a.credit_share("old", 0, RHO)
    for _ in range(4):
        a.credit_share("new", 0, RHO)
    d = a.distribute_block_reward(1, 1000)
    assert d.credits["new"] > 4 * d.credits["old"] and d.conserved()


def test_scheme_validation():
    with pytest.raises(ValueError):
        PayoutScheme("PROP")
    with pytest.raises(ValueError):
        PayoutScheme(PPLNS, N=0)


def test_share_ratio():
    assert share_ratio(4, 14) == Fraction(1, 1024)
    with pytest.raises(ValueError):
        share_ratio(9, 8)


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(SCHEMES),
       events=st.lists(st.one_of(st.tuples(st.just("s"), st.sampled_from("abc")),
                                 st.tuples(st.just("b"), st.integers(0, 10**10)),
                                 st.tuples(st.just("v"), st.integers(0, 10**9))), max_size=60))
def test_conservation(kind, events):
    a = acct(kind, N=7, expected_fees=10**7, half_life=3)
    for h, (tag, x) in enumerate(events):
        if tag == "s":
            a.credit_share(x, h, RHO)
        elif tag == "b":
            d = a.distribute_block_reward(h, x, fees=x // 10)
            assert d.conserved()
        else:
            d = a.distribute_vblock_reward(h, x, "last_block", a.distributions[-1] if a.distributions else None)
            assert d.conserved()
        a.mature(h)
        assert a.ledger.total() == a.ledger.received
        assert all(v >= 0 for v in a.ledger.balances.values())


@given(value=st.integers(0, 10**12), weights=st.dictionaries(st.text(min_size=1, max_size=3),
                                                              st.integers(1, 1000), min_size=1, max_size=8))
def test_split_dust_is_small(value, weights):
    credits, dust = split_proportional(value, weights)
    assert sum(credits.values()) + dust == value
    assert 0 <= dust < len(weights)


def test_pplns_without_blocks_pays_nothing():
    a = acct(PPLNS, N=5)
    for m in "abcab":
        a.credit_share(m, 0, RHO)
    a.mature(10**6)
    assert all(a.ledger.income(m) == 0 for m in "abc")


# maturity and penalties

def test_maturity_boundary():
    led = Ledger()
    led.add_pending("m", 10, maturity=5)
    mature_rewards(led, 4)
    assert led.confirmed("m") == 0 and led.pending_of("m") == 10
    mature_rewards(led, 5)
    assert led.confirmed("m") == 10 and led.pending_of("m") == 0


def test_forfeited_never_matures():
    a = acct(PPS)
    a.credit_share("m", 0, RHO)
    taken = a.penalize("m", PenaltyPolicy())
    assert taken == COIN // 1024 and "m" in a.ledger.banned
    a.mature(10**6)
    assert a.ledger.confirmed("m") == 0
    assert a.ledger.total() == a.ledger.received
    assert a.credit_share("m", 1, RHO) == 0


# auditor selection

def test_auditor_selection():
    single = AuditorSet((b"k0",))
    assert all(select_auditor(single, bytes([i]) * 32)[0] == 0 for i in range(20))
    members = tuple(bytes([i]) * 32 for i in range(16))
    aset = AuditorSet(members)
    bid = b"\x07" * 32
    k, key, proof = select_auditor(aset, bid)
    assert select_auditor(aset, bid) == (k, key, proof)
    assert key == members[k] and proof.leaf == key and proof.root == aset.root
    assert verify_merkle_proof(proof)
    with pytest.raises(ValueError):
        AuditorSet(())
    with pytest.raises(ValueError):
        auditor_index(bid, 0)


@given(bid=st.binary(min_size=32, max_size=32), n=st.integers(1, 1000))
def test_auditor_index_in_range(bid, n):
    assert 0 <= auditor_index(bid, n) < n


# adjudication

def evidence_fixture():
    g = g0(difficulty=6)
    u = WorkUnit(g, NonceRange(0, 4095), "acc", 1, BitPattern.zeros(6))
    hits = mine_scan(g, u.range, 6)
    au = AuditableWorkUnit(g, NonceRange(0, hits[-1][0]), u)
    return g, au, hits


def test_adjudication_verdicts():
    g, au, hits = evidence_fixture()
    n, x = hits[0]
    e = EvidenceRecord(au, n, x, au.pattern, "rep")
    assert adjudicate_evidence(e, []) == Verdict.GUILTY
    reported = ShareRecord("acc", g.template_id(), n, x, au.pattern, 0)
    assert adjudicate_evidence(e, [reported]) == Verdict.INNOCENT
    other = ShareRecord("someone", g.template_id(), n, x, au.pattern, 0)
    assert adjudicate_evidence(e, [other]) == Verdict.GUILTY
    outside = EvidenceRecord(AuditableWorkUnit(g, NonceRange(n + 1, n + 10), au.source), n, x, au.pattern, "rep")
    assert adjudicate_evidence(outside, []) == Verdict.INVALID
    assert adjudicate_evidence(EvidenceRecord(au, n, bytes(32), au.pattern, "rep"), []) == Verdict.INVALID


def test_guilty_verdict_forfeits_stake():
    g, au, hits = evidence_fixture()
    a = acct(PPS)
    a.credit_share("acc", 0, RHO)
    a.credit_share("rep", 0, RHO)
    e = EvidenceRecord(au, hits[0][0], hits[0][1], au.pattern, "rep")
    assert adjudicate_evidence(e, [], PenaltyPolicy(), a.ledger) == Verdict.GUILTY
    assert a.ledger.pending_of("acc") == 0 and a.ledger.forfeited["acc"] == COIN // 1024
    assert a.ledger.pending_of("rep") == COIN // 1024
    assert a.ledger.total() == a.ledger.received
