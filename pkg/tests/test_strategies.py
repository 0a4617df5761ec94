import pytest
from hypothesis import given
from hypothesis import strategies as st

from apow.strategies import (
    ADVERSARIAL_KINDS, AUDIT, MINE, ActionKind, Hit, MinerObservation, Withholder, colluding_auditor_step,
    honest_step, make_strategy, timestamp_roller_step, vmining_withholder_step, withholder_step,
)

from helpers import g0

A = ActionKind


def kinds(actions):
    return [a.kind for a in actions]


def hit(n, owner=None):
    return Hit(n, bytes(32), g0(time=7), owner)


def test_honest_examples():
    assert kinds(honest_step(MinerObservation(full_hits=(hit(5),)))) == [A.SUBMIT_BLOCK]
    assert kinds(honest_step(MinerObservation(share_hits=(hit(1), hit(2), hit(3))))) == [A.SUBMIT_SHARE] * 3
    obs = MinerObservation(mode=AUDIT, audit_hits=(hit(9, "x"),))
    assert kinds(honest_step(obs)) == [A.REPORT_AUDIT_HIT]
    assert kinds(honest_step(MinerObservation(mode=AUDIT, full_hits=(hit(1),)))) == [A.SUBMIT_VBLOCK]
    assert kinds(honest_step(MinerObservation())) == [A.IDLE]


def test_actions_follow_nonce_order():
    obs = MinerObservation(share_hits=(hit(1), hit(9)), full_hits=(hit(9),))
    assert kinds(honest_step(obs)) == [A.SUBMIT_SHARE, A.SUBMIT_SHARE, A.SUBMIT_BLOCK]


def test_withholder_examples():
    assert kinds(withholder_step(MinerObservation(full_hits=(hit(5),)))) == [A.SUPPRESS_SOLUTION]
    assert kinds(withholder_step(MinerObservation(share_hits=(hit(5),)))) == [A.SUBMIT_SHARE]
    assert kinds(withholder_step(MinerObservation())) == [A.IDLE]


def test_residual_withholder():
    w = Withholder("residual")
    assert kinds(w.step(MinerObservation(full_hits=(hit(5),)))) == [A.IDLE]
    assert kinds(w.step(MinerObservation(share_hits=(hit(8),)))) == [A.SUBMIT_BLOCK, A.SUBMIT_SHARE]
    w.step(MinerObservation(full_hits=(hit(20),)))
    assert kinds(w.step(MinerObservation(template_expired=True))) == [A.SUPPRESS_SOLUTION]
    with pytest.raises(ValueError):
        Withholder("sneaky")


def test_roller_examples():
    out = timestamp_roller_step(MinerObservation(share_hits=(hit(3),)))
    assert kinds(out) == [A.SUBMIT_SHARE, A.ROLL_TIMESTAMP] and out[1].payload == 8
    out = timestamp_roller_step(MinerObservation(full_hits=(hit(3),)))
    assert kinds(out) == [A.SUPPRESS_SOLUTION, A.ROLL_TIMESTAMP] and out[1].payload == 8
    assert kinds(timestamp_roller_step(MinerObservation())) == [A.IDLE]


def test_colluder_examples():
    obs = MinerObservation(mode=AUDIT, audit_hits=(hit(1, "mallet"),))
    assert kinds(colluding_auditor_step(obs, "mallet")) == [A.IDLE]
    obs = MinerObservation(mode=AUDIT, audit_hits=(hit(1, "carol"),))
    assert kinds(colluding_auditor_step(obs, "mallet")) == [A.REPORT_AUDIT_HIT]
    assert kinds(colluding_auditor_step(MinerObservation(share_hits=(hit(2),)), "mallet")) == [A.SUBMIT_SHARE]


def test_vmining_withholder_examples():
    assert kinds(vmining_withholder_step(MinerObservation(mode=AUDIT, full_hits=(hit(4),)))) == [A.SUPPRESS_SOLUTION]
    assert kinds(vmining_withholder_step(MinerObservation(mode=AUDIT, audit_hits=(hit(4, "x"),)))) == [
        A.REPORT_AUDIT_HIT]
    assert kinds(vmining_withholder_step(MinerObservation(mode=AUDIT, share_hits=(hit(4),)))) == [A.SUBMIT_SHARE]
    # outside audit mode it mines honestly
    assert kinds(vmining_withholder_step(MinerObservation(full_hits=(hit(4),)))) == [A.SUBMIT_BLOCK]


def test_make_strategy():
    assert make_strategy("honest").honest
    assert make_strategy("colluder", accomplice="w").accomplice == "w"
    with pytest.raises(ValueError):
        make_strategy("selfish")


nonces = st.lists(st.integers(0, 1000), max_size=6, unique=True)


@given(s=nonces, f=nonces, a=nonces, mode=st.sampled_from([MINE, AUDIT]), expired=st.booleans())
def test_honest_never_adversarial(s, f, a, mode, expired):
    obs = MinerObservation(mode=mode, share_hits=tuple(map(hit, s)), full_hits=tuple(map(hit, f)),
                           audit_hits=tuple(hit(n, "x") for n in a), template_expired=expired)
    acts = honest_step(obs)
    assert not set(kinds(acts)) & set(ADVERSARIAL_KINDS)
    assert acts == honest_step(obs)
    shares = sum(k == A.SUBMIT_SHARE for k in kinds(acts))
    assert shares == len(s)
