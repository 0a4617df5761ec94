"""Auditable proof-of-work: v-mining, v-block validation, pool audit accounting and simulation."""

__version__ = "0.1.0"
