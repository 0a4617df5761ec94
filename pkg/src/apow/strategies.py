"""Miner behaviour as step functions over what a miner can see.

A strategy receives a :class:`MinerObservation` for a chunk of scanned
nonces and returns the actions it takes, in nonce order. Strategies never
see pool-private data: only their own work unit, their hits and the tip.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

MINE = "mine"
AUDIT = "audit"


class ActionKind(str, Enum):
    SUBMIT_SHARE = "SubmitShare"
    SUBMIT_BLOCK = "SubmitBlock"
    SUBMIT_VBLOCK = "SubmitVBlock"
    REPORT_AUDIT_HIT = "ReportAuditHit"
    SUPPRESS_SOLUTION = "SuppressSolution"
    ROLL_TIMESTAMP = "RollTimestamp"
    REQUEST_WORK = "RequestWork"
    IDLE = "Idle"


ADVERSARIAL_KINDS = (ActionKind.SUPPRESS_SOLUTION, ActionKind.ROLL_TIMESTAMP)


@dataclass(frozen=True)
class MinerAction:
    kind: ActionKind
    payload: Any = None


@dataclass(frozen=True)
class Hit:
    """A scanned nonce whose digest matched a pattern.

    ``owner`` is set on audit hits: the miner whose unit was re-scanned.
    """

    nonce: int
    digest: bytes
    template: Any = None
    owner: str | None = None
    source: Any = None


@dataclass(frozen=True)
class MinerObservation:
    unit: Any = None
    mode: str = MINE
    share_hits: tuple[Hit, ...] = ()
    full_hits: tuple[Hit, ...] = ()
    audit_hits: tuple[Hit, ...] = ()
    tip: bytes = b""
    time: int = 0
    template_expired: bool = False

    def ordered(self) -> list[tuple[str, Hit]]:
        tagged = [("share", h) for h in self.share_hits] + [("full", h) for h in self.full_hits]
        tagged += [("audit", h) for h in self.audit_hits]
        order = {"audit": 0, "share": 1, "full": 1}
        return sorted(tagged, key=lambda t: (t[1].nonce, order[t[0]]))


IDLE = [MinerAction(ActionKind.IDLE)]


def _or_idle(actions: list[MinerAction]) -> list[MinerAction]:
    return actions or list(IDLE)


def _solution_action(obs: MinerObservation, hit: Hit) -> MinerAction:
    kind = ActionKind.SUBMIT_VBLOCK if obs.mode == AUDIT else ActionKind.SUBMIT_BLOCK
    return MinerAction(kind, hit)


def honest_step(obs: MinerObservation) -> list[MinerAction]:
    out = []
    for tag, h in obs.ordered():
        if tag == "share":
            out.append(MinerAction(ActionKind.SUBMIT_SHARE, h))
        elif tag == "full":
            out.append(_solution_action(obs, h))
        else:
            out.append(MinerAction(ActionKind.REPORT_AUDIT_HIT, h))
    return _or_idle(out)


class Strategy:
    name = "base"
    honest = False

    def step(self, obs: MinerObservation) -> list[MinerAction]:
        raise NotImplementedError


class Honest(Strategy):
    name = "honest"
    honest = True

    def step(self, obs: MinerObservation) -> list[MinerAction]:
        return honest_step(obs)


@dataclass
class Withholder(Strategy):
    """Submits shares, suppresses full solutions.

    In ``residual`` mode a solution is held back only until the next share:
    if a share arrives the solution is released (it would now sit inside an
    auditable interval), if the template expires first it is suppressed.
    """

    mode: str = "naive"
    held: Hit | None = field(default=None, repr=False)
    name = "withholder"

    def __post_init__(self):
        if self.mode not in ("naive", "residual"):
            raise ValueError(f"unknown withholding mode {self.mode!r}")

    def step(self, obs: MinerObservation) -> list[MinerAction]:
        if obs.mode == AUDIT:
            return vmining_withholder_step(obs)
        out = []
        for tag, h in obs.ordered():
            if tag == "share":
                if self.held is not None:
                    out.append(_solution_action(obs, self.held))
                    self.held = None
                out.append(MinerAction(ActionKind.SUBMIT_SHARE, h))
            elif tag == "full":
                if self.mode == "residual" and self.held is None:
                    self.held = h
                else:
                    out.append(MinerAction(ActionKind.SUPPRESS_SOLUTION, h))
        if obs.template_expired and self.held is not None:
            out.append(MinerAction(ActionKind.SUPPRESS_SOLUTION, self.held))
            self.held = None
        return _or_idle(out)


def withholder_step(obs: MinerObservation, mode: str = "naive") -> list[MinerAction]:
    return Withholder(mode).step(obs)


def timestamp_roller_step(obs: MinerObservation) -> list[MinerAction]:
    """Acts on the first hit only, then rolls the timestamp; later hits in the
    chunk belong to a template the miner has already abandoned."""
    if obs.mode == AUDIT:
        return vmining_withholder_step(obs)
    for tag, h in obs.ordered():
        if tag == "audit":
            continue
        kind = ActionKind.SUBMIT_SHARE if tag == "share" else ActionKind.SUPPRESS_SOLUTION
        t = h.template.time if h.template is not None else obs.time
        return [MinerAction(kind, h), MinerAction(ActionKind.ROLL_TIMESTAMP, t + 1)]
    return list(IDLE)


class TimestampRoller(Strategy):
    name = "roller"

    def step(self, obs: MinerObservation) -> list[MinerAction]:
        return timestamp_roller_step(obs)


def colluding_auditor_step(obs: MinerObservation, accomplice: str) -> list[MinerAction]:
    out = [a for a in honest_step(obs)
           if not (a.kind == ActionKind.REPORT_AUDIT_HIT and a.payload.owner == accomplice)]
    return _or_idle([a for a in out if a.kind != ActionKind.IDLE])


@dataclass
class ColludingAuditor(Strategy):
    accomplice: str = ""
    name = "colluder"

    def step(self, obs: MinerObservation) -> list[MinerAction]:
        return colluding_auditor_step(obs, self.accomplice)


def vmining_withholder_step(obs: MinerObservation) -> list[MinerAction]:
    if obs.mode != AUDIT:
        return honest_step(obs)
    out = []
    for tag, h in obs.ordered():
        if tag == "share":
            out.append(MinerAction(ActionKind.SUBMIT_SHARE, h))
        elif tag == "full":
            out.append(MinerAction(ActionKind.SUPPRESS_SOLUTION, h))
        else:
            out.append(MinerAction(ActionKind.REPORT_AUDIT_HIT, h))
    return _or_idle(out)


class VMiningWithholder(Strategy):
    name = "vmining_withholder"

    def step(self, obs: MinerObservation) -> list[MinerAction]:
        return vmining_withholder_step(obs)


def make_strategy(name: str, **params) -> Strategy:
    if name == "honest":
        return Honest()
    if name == "withholder":
        return Withholder(params.get("mode", "naive"))
    if name == "roller":
        return TimestampRoller()
    if name == "colluder":
        return ColludingAuditor(params["accomplice"])
    if name == "vmining_withholder":
        return VMiningWithholder()
    raise ValueError(f"unknown strategy {name!r}")
