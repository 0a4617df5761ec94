"""Closed-form calculators: caching-attack storage cost and residual
withholding escape probability (with a Monte-Carlo check)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CachingModel:
    hashrate: float
    expected_block_time: float
    stored_bits_per_digest: float = 256
    ram_word_bits: int = 128

    def __post_init__(self):
        if self.hashrate < 0 or self.expected_block_time < 0:
            raise ValueError("hashrate and block time must be non-negative")
        if self.stored_bits_per_digest <= 0 or self.ram_word_bits <= 0:
            raise ValueError("bit widths must be positive")


def caching_storage_bytes(m: CachingModel) -> float:
    """Bytes needed to cache every digest computed during one block interval."""
    return m.hashrate * m.expected_block_time * m.stored_bits_per_digest / 8


def digests_per_word(m: CachingModel) -> int:
    return int(m.ram_word_bits // m.stored_bits_per_digest)


def residual_escape_probability(share_rate: float, solution_rate: float, lifetime: float) -> float:
    """Probability that a residual withholder escapes over one template.

    Shares and full solutions arrive as independent Poisson processes. The
    withholder escapes when a solution shows up before the first share, or
    when no share shows up before the template expires; it is caught exactly
    when the first share precedes both the first solution and expiry.
    """
    if share_rate < 0 or solution_rate < 0:
        raise ValueError("rates must be non-negative")
    if lifetime <= 0:
        raise ValueError("template lifetime must be positive")
    total = share_rate + solution_rate
    if total == 0:
        return 1.0
    caught = share_rate / total * -math.expm1(-total * lifetime)
    return min(1.0, max(0.0, 1.0 - caught))


def monte_carlo_escape(share_rate: float, solution_rate: float, lifetime: float, trials: int,
                       seed: int = 0) -> tuple[float, float]:
    """Empirical escape frequency and its binomial standard error."""
    rng = np.random.default_rng(seed)
    inf = np.full(trials, np.inf)
    t_s = rng.exponential(1.0 / share_rate, trials) if share_rate > 0 else inf
    t_b = rng.exponential(1.0 / solution_rate, trials) if solution_rate > 0 else inf
    escaped = ((t_b < t_s) & (t_b < lifetime)) | (t_s > lifetime)
    p = float(escaped.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-300) / trials)


def parameter_table(hashrate: float = 200e12, block_time: float = 600,
                    bits: tuple[float, ...] = (256, 16, 1), word_bits: int = 128) -> list[dict]:
    rows = []
    for b in bits:
        m = CachingModel(hashrate, block_time, b, word_bits)
        rows.append({
            "hashrate": hashrate, "block_time": block_time, "bits_per_digest": b,
            "storage_bytes": caching_storage_bytes(m),
            "log2_bytes": math.log2(caching_storage_bytes(m)) if caching_storage_bytes(m) > 0 else float("-inf"),
            "digests_per_word": digests_per_word(m),
        })
    return rows
