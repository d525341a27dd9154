"""Packet-error model, decoding thresholds, and HARQ combining functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class CombiningType(Enum):
    RR = "rr"   # repetition redundancy: SNRs add (MRC), h(x) = x
    IR = "ir"   # incremental redundancy: mutual information adds, h(x) = I(x)


@dataclass(frozen=True)
class McsTable:
    """Rate set, decoding thresholds, and PER decay.

    Rates are bits/symbol, strictly increasing.  Thresholds are derived
    from the threshold-decoding rule I(gamma_th_l) = R_l, i.e.
    gamma_th_l = 2**R_l - 1.  a_tilde = inf selects exact step-function
    (threshold) decoding.
    """

    rates: tuple[float, ...]
    a_tilde: float = 4.0
    thresholds: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if len(rates) < 1:
            raise ValueError("need at least one rate")
        if any(r <= 0 for r in rates):
            raise ValueError("rates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("rates must be strictly increasing")
        if not self.a_tilde > 0:
            raise ValueError("a_tilde must be positive (inf allowed)")
        object.__setattr__(self, "thresholds", tuple(2.0 ** r - 1.0 for r in rates))

    @property
    def num_rates(self) -> int:
        return len(self.rates)

    def rate(self, l: int) -> float:
        """Rate of MCS index l (1-based)."""
        self._check_index(l)
        return self.rates[l - 1]

    def threshold(self, l: int) -> float:
        self._check_index(l)
        return self.thresholds[l - 1]

    def _check_index(self, l: int):
        if not 1 <= l <= len(self.rates):
            raise IndexError(f"MCS index {l} out of range 1..{len(self.rates)}")


def mutual_information(gamma):
    """Gaussian-input mutual information log2(1 + gamma), bits/symbol."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be nonnegative")
    out = np.log2(1.0 + gamma)
    return out if out.ndim else float(out)


def mutual_information_inv(bits):
    """Inverse of mutual_information: 2**bits - 1."""
    bits = np.asarray(bits, dtype=float)
    out = np.exp2(bits) - 1.0
    return out if out.ndim else float(out)


def per(l: int, gamma, table: McsTable):
    """Packet error rate of MCS l at (aggregate) SNR gamma.

    1 below the decoding threshold, exponential decay above it; a step
    function for a_tilde = inf.  Vectorized over gamma.
    """
    table._check_index(l)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be nonnegative")
    th = table.thresholds[l - 1]
    if math.isinf(table.a_tilde):
        out = np.where(gamma < th, 1.0, 0.0)
    else:
        with np.errstate(over="ignore"):
            decay = np.exp(-table.a_tilde * (gamma / th - 1.0))
        out = np.where(gamma < th, 1.0, decay)
    return out if out.ndim else float(out)


def snr_margin_delta(epsilon: float, a_tilde: float) -> float:
    """Multiplicative SNR margin above threshold needed for PER = epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if not a_tilde > 0:
        raise ValueError("a_tilde must be positive")
    return math.log(1.0 / epsilon) / a_tilde + 1.0


def combining_h(gamma, combining: CombiningType):
    """Per-round accumulation function: identity for RR, MI for IR."""
    if combining is CombiningType.RR:
        gamma = np.asarray(gamma, dtype=float)
        return gamma if gamma.ndim else float(gamma)
    return mutual_information(gamma)


def combining_h_inv(x, combining: CombiningType):
    if combining is CombiningType.RR:
        x = np.asarray(x, dtype=float)
        return x if x.ndim else float(x)
    return mutual_information_inv(x)


def aggregate_snr(snrs, combining: CombiningType) -> float:
    """Scalar aggregate SNR h^{-1}(sum h(gamma_t)) of the rounds so far.

    For IR the sum is kept in the MI domain and exponentiated once, which
    avoids overflowing the product prod(1 + gamma_t) at high SNR.
    """
    snrs = np.asarray(snrs, dtype=float)
    if snrs.size == 0:
        raise ValueError("need at least one SNR")
    if np.any(snrs < 0):
        raise ValueError("SNRs must be nonnegative")
    return float(combining_h_inv(np.sum(combining_h(snrs, combining)), combining))


def aggregate_snr_vl(first_len: float, entries, combining: CombiningType = CombiningType.IR) -> float:
    """Aggregate SNR with variable subcodeword lengths (IR only).

    entries is a sequence of (length, snr) pairs for every round,
    including the first; lengths are normalized block fractions.  Reduces
    to aggregate_snr when all lengths equal first_len.
    """
    if combining is not CombiningType.RR and combining is not CombiningType.IR:
        raise TypeError("combining must be a CombiningType")
    if combining is CombiningType.RR:
        raise ValueError("variable-length combining is defined for IR only")
    if not first_len > 0:
        raise ValueError("first_len must be positive")
    acc = 0.0
    for length, g in entries:
        if length < 0:
            raise ValueError("lengths must be nonnegative")
        if length > 0:
            acc += length * mutual_information(g)
    return float(mutual_information_inv(acc / first_len))


def nack_probability(l: int, snrs, combining: CombiningType, table: McsTable) -> float:
    """Probability of k consecutive decoding failures given the round SNRs.

    Backward error implication: the event is governed by the last round's
    aggregate SNR alone, not by a product of per-round PERs.
    """
    return float(per(l, aggregate_snr(snrs, combining), table))
