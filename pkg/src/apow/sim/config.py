"""Scenario configuration, loaded from YAML (JSON is accepted too).

Top-level keys mirror :class:`SimConfig`; ``miners`` is a list of
``{name, strategy, hashrate, params}`` and ``payout``, ``audit``, ``chain``
and ``penalty`` are nested sections. Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..chain import ATTRIBUTIONS, ChainParams
from ..pool import SCHEMES, PayoutScheme, PenaltyPolicy
from ..pow_core import DEFAULT_SCHEME, HASH_SCHEMES
from ..strategies import make_strategy

VBLOCK_MODES = ("scheme1", "scheme2c", "none")
ROTATIONS = ("csprng", "round_robin")
# strategies that never publish a mined block
SUPPRESSING = ("withholder", "roller")


class ConfigError(ValueError):
    pass


@dataclass
class MinerSpec:
    name: str
    strategy: str = "honest"
    hashrate: int = 256
    params: dict = field(default_factory=dict)


@dataclass
class PayoutConfig:
    scheme: str = "PPS"
    N: int = 2000
    half_life: float = 1000.0
    subsidy: int = 5_000_000_000
    fees: int = 0
    vblock_reward: int = 4_500_000_000
    auditor_prize: int = 0
    vblock_routing: str = "pool"
    retention: int = 100


@dataclass
class AuditConfig:
    enabled: bool = True
    coverage: float = 1.0
    recursive_coverage: float = 1.0
    recursive: bool = False
    auditors_per_round: int = 1
    rotation: str = "csprng"
    max_age: int = 10
    granule: int = 1024
    drain: bool = True


@dataclass
class ChainConfig:
    D: int = 3
    D2: int = 2
    D_I: int = 6
    immediate_inclusion: bool = False
    max_vblocks_per_height: int = 2
    attribution: str = "pool"
    allow_recursive: bool = True
    vblocks: str = "scheme1"


@dataclass
class PenaltyConfig:
    forfeit_pending: bool = True
    ban: bool = True


@dataclass
class SimConfig:
    name: str = "scenario"
    seed: int = 0
    rounds: int = 50
    d: int = 12
    share_difficulty: int = 4
    hash_scheme: str = DEFAULT_SCHEME
    miners: list[MinerSpec] = field(default_factory=list)
    external_hashrate: int = 0
    template_lifetime: int = 30
    unit_size: int = 1 << 20
    allow_rolling: bool = False
    max_ticks: int = 10_000_000
    payout: PayoutConfig = field(default_factory=PayoutConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)

    def validate(self) -> "SimConfig":
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if not 0 < self.share_difficulty <= self.d:
            raise ConfigError("share difficulty must lie in (0, d]")
        if not 1 <= self.d <= 32:
            raise ConfigError("d must lie in [1, 32] for a desk-scale simulation")
        if self.hash_scheme not in HASH_SCHEMES:
            raise ConfigError(f"unknown hash scheme {self.hash_scheme!r}")
        if not self.miners:
            raise ConfigError("roster is empty")
        names = [m.name for m in self.miners]
        if len(set(names)) != len(names) or "external" in names:
            raise ConfigError("miner names must be unique and not 'external'")
        for m in self.miners:
            if m.hashrate < 1:
                raise ConfigError(f"miner {m.name}: hashrate must be positive")
            try:
                make_strategy(m.strategy, **m.params)
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"miner {m.name}: {exc}") from exc
        if self.external_hashrate < 0 or self.template_lifetime < 1 or self.unit_size < 1:
            raise ConfigError("external hashrate, template lifetime and unit size must be sensible")
        if self.external_hashrate == 0 and all(m.strategy in SUPPRESSING for m in self.miners):
            raise ConfigError("nobody publishes blocks: add external hashrate or a block-publishing miner")
        p = self.payout
        if p.scheme not in SCHEMES:
            raise ConfigError(f"unknown payout scheme {p.scheme!r}")
        if p.vblock_routing not in ("pool", "last_block"):
            raise ConfigError(f"unknown v-block routing {p.vblock_routing!r}")
        if min(p.subsidy, p.fees, p.vblock_reward, p.auditor_prize, p.retention) < 0:
            raise ConfigError("amounts must be non-negative")
        a = self.audit
        if not (0 <= a.coverage <= 1 and 0 <= a.recursive_coverage <= 1):
            raise ConfigError("coverage must lie in [0, 1]")
        if a.rotation not in ROTATIONS:
            raise ConfigError(f"unknown rotation {a.rotation!r}")
        if not 1 <= a.auditors_per_round <= len(self.miners) or a.max_age < 1 or a.granule < 1:
            raise ConfigError("bad audit section")
        c = self.chain
        if c.vblocks not in VBLOCK_MODES:
            raise ConfigError(f"unknown v-block mode {c.vblocks!r}")
        if c.attribution not in ATTRIBUTIONS:
            raise ConfigError(f"unknown attribution {c.attribution!r}")
        try:
            self.chain_params()
            self.payout_scheme()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def chain_params(self) -> ChainParams:
        c = self.chain
        return ChainParams(
            difficulty=self.d, D=c.D, D2=c.D2, D_I=c.D_I, immediate_inclusion=c.immediate_inclusion,
            max_vblocks_per_height=c.max_vblocks_per_height, allow_recursive=c.allow_recursive,
            attribution=c.attribution, subsidy=self.payout.subsidy,
            vblock_subsidy=self.payout.vblock_reward, hash_scheme=self.hash_scheme,
        )

    def payout_scheme(self) -> PayoutScheme:
        p = self.payout
        return PayoutScheme(p.scheme, p.N, p.fees, p.half_life)

    def penalty_policy(self) -> PenaltyPolicy:
        return PenaltyPolicy(self.penalty.forfeit_pending, self.penalty.ban)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "SimConfig":
        """Copy with top-level fields or dotted section fields (``"audit.coverage"``) changed."""
        data = self.to_dict()
        for key, value in changes.items():
            key = key.replace("__", ".")
            section, _, leaf = key.rpartition(".")
            target = data[section] if section else data
            if leaf not in target:
                raise ConfigError(f"unknown config key {key!r}")
            target[leaf] = value
        return SimConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data or {})
        sections = {"payout": PayoutConfig, "audit": AuditConfig, "chain": ChainConfig, "penalty": PenaltyConfig}
        kwargs = {}
        known = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in sections:
                kwargs[key] = _build(sections[key], value or {}, key)
            elif key == "miners":
                kwargs[key] = _roster(value)
            else:
                kwargs[key] = value
        return cls(**kwargs).validate()


def _build(cls, data: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    return cls(**data)


def _roster(entries) -> list[MinerSpec]:
    """Roster entries may carry ``count`` to expand into numbered miners."""
    out = []
    for e in entries or []:
        e = dict(e)
        count = e.pop("count", 1)
        base = _build(MinerSpec, e, "miners")
        if count == 1:
            out.append(base)
        else:
            out += [dataclasses.replace(base, name=f"{base.name}{k}", params=dict(base.params)) for k in range(count)]
    return out


def load_config(path: str | Path) -> SimConfig:
    with open(path) as fp:
        return SimConfig.from_dict(yaml.safe_load(fp))
