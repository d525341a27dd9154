"""AMC decision regions and throughput.

Regions are either a monotone threshold vector (one interval per rate) or
explicit unions of intervals; both partition [0, inf) with the half-open
convention [gamma_l, gamma_{l+1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .coding import McsTable, per


class RegionKind(Enum):
    THRESHOLDS = "thresholds"
    INTERVALS = "intervals"


@dataclass(frozen=True)
class ThroughputEstimate:
    """Throughput point value in bits/symbol with provenance."""

    value: float
    ci_half_width: float = 0.0
    provenance: str = "analytic"


@dataclass(frozen=True)
class DecisionRegions:
    """Per-rate SNR regions.

    For kind THRESHOLDS, `thresholds` holds (gamma_1, ..., gamma_L) with
    gamma_1 = 0 and an implicit gamma_{L+1} = inf; equal adjacent entries
    encode a degenerate (empty) region.  For kind INTERVALS, `intervals`
    holds, per rate, a tuple of (lo, hi) pairs; across rates they must
    partition [0, inf) exactly once.
    """

    kind: RegionKind
    thresholds: tuple[float, ...] | None = None
    intervals: tuple[tuple[tuple[float, float], ...], ...] | None = None

    def __post_init__(self):
        if self.kind is RegionKind.THRESHOLDS:
            if self.thresholds is None:
                raise ValueError("threshold regions need a threshold vector")
            t = tuple(float(x) for x in self.thresholds)
            object.__setattr__(self, "thresholds", t)
            if t[0] != 0.0:
                raise ValueError("gamma_1 must be 0")
            if any(b < a for a, b in zip(t, t[1:])):
                raise ValueError("thresholds must be non-decreasing")
        else:
            if self.intervals is None:
                raise ValueError("interval regions need interval lists")
            iv = tuple(tuple((float(a), float(b)) for a, b in per_l) for per_l in self.intervals)
            object.__setattr__(self, "intervals", iv)
            self._validate_partition(iv)

    @staticmethod
    def _validate_partition(iv):
        flat = [(a, b, l + 1) for l, per_l in enumerate(iv) for a, b in per_l]
        flat.sort()
        if not flat or flat[0][0] != 0.0:
            raise ValueError("intervals must start at 0")
        for (a, b, _), (a2, _, _) in zip(flat, flat[1:]):
            if b != a2:
                raise ValueError("intervals must partition [0, inf) with no gaps/overlaps")
            if b <= a:
                raise ValueError("intervals must be non-empty and ordered")
        if not math.isinf(flat[-1][1]):
            raise ValueError("last interval must extend to inf")

    @property
    def num_rates(self) -> int:
        if self.kind is RegionKind.THRESHOLDS:
            return len(self.thresholds)
        return len(self.intervals)

    def intervals_for(self, l: int) -> tuple[tuple[float, float], ...]:
        """Interval list of region l (1-based); empty for degenerate regions."""
        if self.kind is RegionKind.INTERVALS:
            return self.intervals[l - 1]
        t = self.thresholds + (math.inf,)
        lo, hi = t[l - 1], t[l]
        return ((lo, hi),) if hi > lo else ()

    def piecewise(self) -> tuple[np.ndarray, np.ndarray]:
        """(edges, labels): SNR in [edges[i], edges[i+1]) belongs to labels[i]."""
        if self.kind is RegionKind.THRESHOLDS:
            edges = np.asarray(self.thresholds)
            labels = np.arange(1, len(self.thresholds) + 1)
            keep = np.ones(len(edges), bool)
            keep[:-1] = np.diff(edges) > 0
            return edges[keep], labels[keep]
        flat = sorted((a, b, l + 1) for l, per_l in enumerate(self.intervals) for a, b in per_l)
        return np.array([f[0] for f in flat]), np.array([f[2] for f in flat])


def classify(gamma, regions: DecisionRegions):
    """MCS index of the region containing gamma; half-open boundaries.

    Vectorized over gamma.
    """
    edges, labels = regions.piecewise()
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be nonnegative")
    idx = np.searchsorted(edges, gamma, side="right") - 1
    out = labels[idx]
    return out if out.ndim else int(out)


def amc_thresholds_exact(table: McsTable) -> DecisionRegions:
    """Throughput-optimal thresholds: crossings of the per-rate instantaneous
    throughput curves R_l (1 - PER_l).

    For a_tilde = inf the crossing degenerates to the decoding threshold.
    """
    L = table.num_rates
    if math.isinf(table.a_tilde):
        t = (0.0,) + table.thresholds[1:]
        return DecisionRegions(RegionKind.THRESHOLDS, thresholds=t)
    gammas = [0.0]
    for l in range(2, L + 1):
        rl, rm = table.rate(l), table.rate(l - 1)

        def g(x, l=l, rl=rl, rm=rm):
            return rl * (1.0 - per(l, x, table)) - rm * (1.0 - per(l - 1, x, table))

        lo = table.threshold(l) * (1.0 + 1e-14)
        hi = table.threshold(l) * 1e4
        if not (g(lo) < 0 < g(hi)):
            raise ValueError(f"no bracketed crossing for rates {rm}, {rl}")
        gammas.append(brentq(g, lo, hi, rtol=1e-12))
    return DecisionRegions(RegionKind.THRESHOLDS, thresholds=tuple(gammas))


def amc_thresholds_closed_form(table: McsTable) -> DecisionRegions:
    """Closed-form approximation gamma_l = gamma_th_l (1 + ln(R_l/(R_l-R_{l-1}))/a)."""
    if math.isinf(table.a_tilde):
        return amc_thresholds_exact(table)
    gammas = [0.0]
    for l in range(2, table.num_rates + 1):
        rl, rm = table.rate(l), table.rate(l - 1)
        gammas.append(table.threshold(l) * (1.0 + math.log(rl / (rl - rm)) / table.a_tilde))
    return DecisionRegions(RegionKind.THRESHOLDS, thresholds=tuple(gammas))


def amc_thresholds_per_target(table: McsTable, p_loss: float, arq_rounds: int = 1) -> DecisionRegions:
    """Thresholds placed at PER_l = p_loss**(1/M), clamped below by the
    throughput-optimal values (lower thresholds would lose throughput with
    no reliability benefit at the LLC).
    """
    if not 0.0 < p_loss < 1.0:
        raise ValueError("p_loss must be in (0, 1)")
    if arq_rounds < 1:
        raise ValueError("arq_rounds must be >= 1")
    p_t = p_loss ** (1.0 / arq_rounds)
    optimal = amc_thresholds_exact(table).thresholds
    gammas = [0.0]
    for l in range(2, table.num_rates + 1):
        if math.isinf(table.a_tilde):
            g = table.threshold(l)
        else:
            # invert exp(-a (g/th - 1)) = p_t
            g = table.threshold(l) * (1.0 + math.log(1.0 / p_t) / table.a_tilde)
        gammas.append(max(g, optimal[l - 1]))
    return DecisionRegions(RegionKind.THRESHOLDS, thresholds=tuple(gammas))


def _quad_interval(f, a, b, singular_points, avg_snr, epsabs=1e-9):
    """Adaptive quadrature on [a, b] (b may be inf) with interior kinks."""
    if math.isinf(b):
        cut = max(a * 2.0, 50.0 * avg_snr, *(p * 2.0 for p in singular_points), avg_snr)
        head = _quad_interval(f, a, cut, singular_points, avg_snr, epsabs)
        tail, _ = quad(f, cut, np.inf, epsabs=epsabs)
        return head + tail
    pts = sorted(p for p in singular_points if a < p < b)
    total, _ = quad(f, a, b, points=pts or None, epsabs=epsabs, limit=200)
    return total


def amc_throughput(regions: DecisionRegions, table: McsTable, avg_snr: float) -> ThroughputEstimate:
    """Expected AMC throughput sum_l R_l (1 - f_1l) p_l over the SNR law.

    Identical for slow and fast fading (errors are block-memoryless).
    """
    if not avg_snr > 0:
        raise ValueError("avg_snr must be positive")
    total = 0.0
    for l in range(1, table.num_rates + 1):
        rl = table.rate(l)
        th = table.threshold(l)

        def integrand(x, l=l, rl=rl):
            return rl * (1.0 - per(l, x, table)) * math.exp(-x / avg_snr) / avg_snr

        for a, b in regions.intervals_for(l):
            total += _quad_interval(integrand, a, b, [th], avg_snr)
    return ThroughputEstimate(value=total)
