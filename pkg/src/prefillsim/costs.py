"""Analytic latency/transfer model: compute-bound prefill, memory-bound
batched decode steps, KV handoff with a staging penalty under decode-side
memory pressure.

All durations are deterministic pure functions of the inputs and CostParams,
rounded half-up to integer microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import SimTime

MICROS = 1_000_000


def _round_us(value: Fraction) -> SimTime:
    """Round half-up to 1 microsecond, exactly (no float involved)."""
    return int(value + Fraction(1, 2)) if value >= 0 else -int(-value + Fraction(1, 2))


@dataclass(frozen=True)
class CostParams:
    prefill_fixed_overhead_us: int = 2_000
    prefill_rate_tokens_per_s: int = 6_000
    decode_step_base_us: int = 16_000
    decode_step_per_request_us: int = 100
    decode_step_per_kv_ktoken_us: int = 10
    kv_bytes_per_token: int = 256 * 1024
    transfer_bandwidth_bytes_per_s: int = 128 * 1024**3
    staging_threshold: float = 0.9
    staging_penalty: int = 8

    def __post_init__(self) -> None:
        if self.prefill_rate_tokens_per_s <= 0:
            raise ValueError("prefill_rate_tokens_per_s must be > 0")
        if self.transfer_bandwidth_bytes_per_s <= 0:
            raise ValueError("transfer_bandwidth_bytes_per_s must be > 0")
        if self.staging_penalty < 1:
            raise ValueError("staging_penalty must be >= 1")
        if not 0 < self.staging_threshold <= 1:
            raise ValueError("staging_threshold must be in (0, 1]")

    def prefill_time(self, new_tokens: int) -> SimTime:
        """Fixed per-request overhead plus linear compute over uncached tokens.

        new_tokens == 0 means a full prefix hit (overhead only).
        """
        if new_tokens < 0:
            raise ValueError("new_tokens must be >= 0")
        compute = Fraction(new_tokens * MICROS, self.prefill_rate_tokens_per_s)
        return self.prefill_fixed_overhead_us + _round_us(compute)

    def decode_step_time(self, batch_size: int, resident_kv_tokens: int) -> SimTime:
        """One synchronous step advancing every batch member by one token."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        return _round_us(
            Fraction(self.decode_step_base_us)
            + Fraction(self.decode_step_per_request_us * batch_size)
            + Fraction(self.decode_step_per_kv_ktoken_us * resident_kv_tokens, 1000)
        )

    def handoff_time(self, tokens: int, decode_resident_fraction: float) -> SimTime:
        """Transfer of `tokens` worth of KV to a decode worker.

        Multiplied by the staging penalty iff the decode side's resident
        fraction exceeds the staging threshold (fractions above 1 denote
        transient oversubscription and count as above threshold).
        """
        if tokens < 0:
            raise ValueError("tokens must be >= 0")
        base_us = _round_us(
            Fraction(
                tokens * self.kv_bytes_per_token * MICROS,
                self.transfer_bandwidth_bytes_per_s,
            )
        )
        if decode_resident_fraction > self.staging_threshold:
            base_us *= self.staging_penalty
        return base_us
