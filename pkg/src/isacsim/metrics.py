"""
Performance measures: closed-form QPSK bit error rate after whitening and
combining, empirical bit error rate from Gray bit labels, and empirical mean
squared error of the reflection-coefficient estimates.

Aggregation is a pure fold over trial records. Partial aggregates carry
(count, mean, M2) and merge with the count-weighted pairwise update, so
block-parallel accumulation reproduces the serial result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .model import Constellation
from .sic import WhiteningContext


def q_function(x):
    """Standard normal tail probability Q(x) = 0.5 * erfc(x / sqrt(2))."""
    return 0.5 * erfc(x / math.sqrt(2))


def theoretical_ber_qpsk(ctx: WhiteningContext, beta: float) -> float:
    """Coherent Gray-coded QPSK bit error rate for one channel realization.

    After whitening and maximal-ratio combining the detector sees an AWGN
    channel whose post-combining SNR is beta * w^H w, so each bit errs with
    probability Q(sqrt(beta * w^H w)).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return float(q_function(math.sqrt(beta * ctx.combined_gain)))


@dataclass(slots=True)
class TrialRecord:
    """Per-trial quantities entering the BER and MSE aggregates."""

    true_symbol: int
    detected_symbol: int
    true_alpha: complex
    alpha_sic: complex
    alpha_mmse: complex


@dataclass
class AggregateMetrics:
    """Per-cell aggregates of a Monte Carlo run."""

    ber_empirical: float
    ber_theoretical: float
    mse_sic: float
    mse_mmse: float
    trials: int
    ber_stderr: float
    mse_stderr_sic: float
    mse_stderr_mmse: float
    # Paired statistics of (sic error - mmse error) on common random numbers;
    # these sharpen estimator comparisons but stay out of the CSV schema.
    mse_diff_mean: float = 0.0
    mse_diff_stderr: float = 0.0


@dataclass
class RunningStat:
    """Streaming mean and second central moment (Welford/Chan form)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_values(cls, values: np.ndarray) -> "RunningStat":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        m2 = float(((values - mean) ** 2).sum())
        return cls(n=values.size, mean=mean, m2=m2)

    def merge(self, other: "RunningStat") -> "RunningStat":
        """Count-weighted pairwise combination; order of merges is the
        caller's responsibility when bit reproducibility matters."""
        if self.n == 0:
            return RunningStat(other.n, other.mean, other.m2)
        if other.n == 0:
            return RunningStat(self.n, self.mean, self.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)
        return RunningStat(n=n, mean=mean, m2=m2)

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


def binomial_stderr(p: float, n: int) -> float:
    if n <= 0:
        return 0.0
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def bit_error_count(true_symbols: np.ndarray, detected_symbols: np.ndarray,
                    constellation: Constellation) -> int:
    """Total differing bits between true and detected labels."""
    bit_map = constellation.bit_map
    return int((bit_map[true_symbols] != bit_map[detected_symbols]).sum())


def empirical_ber(records: list[TrialRecord],
                  constellation: Constellation) -> tuple[float, float]:
    """Fraction of wrong bits and its binomial standard error."""
    if not records:
        raise ValueError("empirical_ber needs at least one record")
    true_idx = np.array([r.true_symbol for r in records])
    det_idx = np.array([r.detected_symbol for r in records])
    n_bits = len(records) * constellation.bits_per_symbol
    if n_bits == 0:
        return 0.0, 0.0
    errors = bit_error_count(true_idx, det_idx, constellation)
    ber = errors / n_bits
    return ber, binomial_stderr(ber, n_bits)


def empirical_mse(records: list[TrialRecord],
                  which: str) -> tuple[float, float]:
    """Mean |alpha - alpha_hat|^2 of the selected estimator and its stderr.

    `which` selects the estimate: "sic" or "mmse".
    """
    if not records:
        raise ValueError("empirical_mse needs at least one record")
    if which not in ("sic", "mmse"):
        raise ValueError(f"unknown estimator selector {which!r}")
    alpha = np.array([r.true_alpha for r in records])
    est = np.array(
        [r.alpha_sic if which == "sic" else r.alpha_mmse for r in records]
    )
    stat = RunningStat.from_values(np.abs(alpha - est) ** 2)
    return stat.mean, stat.stderr


def aggregate_records(records: list[TrialRecord],
                      constellation: Constellation,
                      ber_theoretical: float) -> AggregateMetrics:
    """Fold a record list into AggregateMetrics (reference aggregation path)."""
    ber, ber_se = empirical_ber(records, constellation)
    alpha = np.array([r.true_alpha for r in records])
    err_sic = np.abs(alpha - np.array([r.alpha_sic for r in records])) ** 2
    err_mmse = np.abs(alpha - np.array([r.alpha_mmse for r in records])) ** 2
    stat_sic = RunningStat.from_values(err_sic)
    stat_mmse = RunningStat.from_values(err_mmse)
    stat_diff = RunningStat.from_values(err_sic - err_mmse)
    return AggregateMetrics(
        ber_empirical=ber,
        ber_theoretical=ber_theoretical,
        mse_sic=stat_sic.mean,
        mse_mmse=stat_mmse.mean,
        trials=len(records),
        ber_stderr=ber_se,
        mse_stderr_sic=stat_sic.stderr,
        mse_stderr_mmse=stat_mmse.stderr,
        mse_diff_mean=stat_diff.mean,
        mse_diff_stderr=stat_diff.stderr,
    )
