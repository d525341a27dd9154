"""Analytic HARQ throughput for slow- and fast-fading channels.

Slow fading: all rounds of a cycle share one SNR, so the error cascade is
a closed-form function of that SNR.  Fast fading: rounds see i.i.d. SNRs
and the conditional cascade f_{k,l}(x) requires averaging over the later
rounds; RR admits a closed form through the Erlang law of the summed SNR,
IR is handled by numerical self-convolution of the per-round mutual
information density on a uniform MI grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import fftconvolve
from scipy.special import gammainc, gammaincc

from .amc import DecisionRegions, ThroughputEstimate, _quad_interval
from .coding import CombiningType, McsTable, mutual_information, per


class HarqVariant(Enum):
    PLAIN = "plain"
    PACKET_DROP = "packet-drop"
    VARIABLE_LENGTH = "variable-length"


@dataclass(frozen=True)
class HarqConfig:
    """Protocol parameters: combining type, round budget, and variant.

    lengths_primary / lengths_aux are the normalized codeword length sets
    used by the variable-length variant; first transmissions draw from the
    primary set only.
    """

    combining: CombiningType
    max_rounds: int
    variant: HarqVariant = HarqVariant.PLAIN
    lengths_primary: tuple[float, ...] = ()
    lengths_aux: tuple[float, ...] = ()

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.variant is HarqVariant.VARIABLE_LENGTH:
            if self.combining is not CombiningType.IR:
                raise ValueError("variable-length HARQ requires IR combining")
            lp = self.lengths_primary
            if not lp or any(b >= a for a, b in zip(lp, lp[1:])) or lp[0] != 1.0:
                raise ValueError("lengths_primary must be strictly decreasing with max 1")
            if self.lengths_aux and max(self.lengths_aux) >= min(lp):
                raise ValueError("aux lengths must be smaller than every primary length")


@dataclass(frozen=True)
class ErrorCascade:
    """Consecutive-failure probabilities f_0 = 1 >= f_1 >= ... >= f_K."""

    values: tuple[float, ...]

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "values", v)
        if not v or abs(v[0] - 1.0) > 1e-12:
            raise ValueError("cascade must start at f_0 = 1")
        if any(b > a + 1e-12 for a, b in zip(v, v[1:])) or v[-1] < -1e-12:
            raise ValueError("cascade must be non-increasing in [0, 1]")

    def __getitem__(self, k: int) -> float:
        return self.values[k]

    @property
    def max_rounds(self) -> int:
        return len(self.values) - 1


# ---------------------------------------------------------------------------
# closed-form masses under the exponential SNR law
# ---------------------------------------------------------------------------

def exp_mass(a: float, b: float, avg_snr: float) -> float:
    """P(a <= SNR < b) for exponential SNR."""
    lo = math.exp(-a / avg_snr)
    hi = 0.0 if math.isinf(b) else math.exp(-b / avg_snr)
    return lo - hi


def per_pdf_mass(l: int, a: float, b: float, table: McsTable, avg_snr: float) -> float:
    """Closed-form integral of pdf(x) * PER_l(x) over [a, b)."""
    th = table.threshold(l)
    total = 0.0
    lo, hi = a, min(b, th)
    if hi > lo:
        total += exp_mass(lo, hi, avg_snr)
    lo = max(a, th)
    if b > lo and not math.isinf(table.a_tilde):
        c = 1.0 / avg_snr + table.a_tilde / th
        width = 0.0 if math.isinf(b) else 1.0 - math.exp(-(b - lo) * c)
        if math.isinf(b):
            width = 1.0
        total += math.exp(table.a_tilde - lo * c) * width / (avg_snr * c)
    return total


# ---------------------------------------------------------------------------
# slow fading
# ---------------------------------------------------------------------------

def slow_cascade(l: int, gamma: float, K: int, combining: CombiningType,
                 table: McsTable) -> ErrorCascade:
    """f_{k,l}(gamma) = PER_l(h^{-1}(k h(gamma))), k = 0..K."""
    if gamma < 0:
        raise ValueError("SNR must be nonnegative")
    if K < 1:
        raise ValueError("K must be >= 1")
    ks = np.arange(1, K + 1)
    if combining is CombiningType.RR:
        agg = ks * gamma
    else:
        with np.errstate(over="ignore"):
            agg = np.exp2(ks * math.log2(1.0 + gamma)) - 1.0
    vals = per(l, agg, table)
    return ErrorCascade((1.0,) + tuple(np.atleast_1d(vals)))


def throughput_from_cascade(rate: float, fs) -> float:
    """Renewal-reward throughput R (1 - f_K) / (1 + sum_{k<K} f_k).

    fs lists f_1..f_K (f_0 = 1 implied); accepts an ErrorCascade too.
    """
    if isinstance(fs, ErrorCascade):
        fs = fs.values[1:]
    fs = [float(f) for f in fs]
    return rate * (1.0 - fs[-1]) / (1.0 + sum(fs[:-1]))


def slow_throughput_at(l: int, gamma: float, K: int, combining: CombiningType,
                       table: McsTable) -> float:
    """Per-SNR HARQ throughput in slow fading; K=1 reduces to R_l(1-PER_l)."""
    return throughput_from_cascade(table.rate(l), slow_cascade(l, gamma, K, combining, table))


def _slow_kinks(l: int, K: int, combining: CombiningType, table: McsTable) -> list[float]:
    # first-round SNRs at which the k-round aggregate hits the threshold
    th = table.threshold(l)
    if combining is CombiningType.RR:
        return [th / k for k in range(1, K + 1)]
    return [(1.0 + th) ** (1.0 / k) - 1.0 for k in range(1, K + 1)]


def slow_throughput(regions: DecisionRegions, K: int, combining: CombiningType,
                    table: McsTable, avg_snr: float) -> ThroughputEstimate:
    """Region-averaged slow-fading throughput; supports interval unions."""
    if not avg_snr > 0:
        raise ValueError("avg_snr must be positive")
    total = 0.0
    for l in range(1, table.num_rates + 1):
        kinks = _slow_kinks(l, K, combining, table)

        def integrand(x, l=l):
            return slow_throughput_at(l, x, K, combining, table) * math.exp(-x / avg_snr) / avg_snr

        for a, b in regions.intervals_for(l):
            total += _quad_interval(integrand, a, b, kinks, avg_snr)
    return ThroughputEstimate(value=total)


# ---------------------------------------------------------------------------
# fast fading
# ---------------------------------------------------------------------------

_PS_CACHE: dict = {}


def _mi_grid(avg_snr: float, n: int, span: float) -> tuple[np.ndarray, float]:
    vmax = math.log2(1.0 + span * avg_snr)
    dv = vmax / n
    return np.arange(n) * dv, dv


def _mi_sum_density(avg_snr: float, extra_rounds: int, n: int, span: float) -> tuple[np.ndarray, float]:
    """Density of the sum of `extra_rounds` i.i.d. per-round MI values on a
    uniform grid; built by FFT self-convolution and cached."""
    key = (avg_snr, extra_rounds, n, span)
    if key in _PS_CACHE:
        return _PS_CACHE[key]
    v, dv = _mi_grid(avg_snr, n, span)
    ln2 = math.log(2.0)
    p_v = ln2 * np.exp2(v) * np.exp(-(np.exp2(v) - 1.0) / avg_snr) / avg_snr
    p_s = p_v
    for _ in range(extra_rounds - 1):
        p_s = fftconvolve(p_s, p_v)[:n] * dv
    if len(_PS_CACHE) > 64:
        _PS_CACHE.clear()
    _PS_CACHE[key] = (p_s, dv)
    return p_s, dv


def _rr_cascade_closed_form(l: int, x, extra_rounds: int, table: McsTable, avg_snr: float):
    """E[PER_l(x + U)], U ~ Erlang(extra_rounds, avg_snr); vectorized in x."""
    x = np.asarray(x, dtype=float)
    th = table.threshold(l)
    m = extra_rounds
    c = np.maximum(0.0, th - x)
    below = gammainc(m, c / avg_snr)
    if math.isinf(table.a_tilde):
        return below
    beta = table.a_tilde / th + 1.0 / avg_snr
    tail = np.exp(table.a_tilde * (1.0 - x / th)) * gammaincc(m, beta * c) / (avg_snr * beta) ** m
    return below + tail


def fast_cascade_conditional(l: int, x: float, k: int, combining: CombiningType,
                             table: McsTable, avg_snr: float,
                             n_grid: int = 1 << 14, span: float = 50.0) -> float:
    """f_{k,l}(x): probability of k consecutive failures given first-round
    SNR x, averaging over the k-1 later i.i.d. round SNRs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if x < 0:
        raise ValueError("SNR must be nonnegative")
    if k == 1:
        return float(per(l, x, table))
    if combining is CombiningType.RR:
        return float(_rr_cascade_closed_form(l, x, k - 1, table, avg_snr))
    p_s, dv = _mi_sum_density(avg_snr, k - 1, n_grid, span)
    s = np.arange(n_grid) * dv
    with np.errstate(over="ignore"):
        agg = np.exp2(mutual_information(x) + s) - 1.0
    return float(np.trapezoid(per(l, agg, table) * p_s, dx=dv))


class FastFadingTables:
    """Pointwise and cumulative f_{k,l} tables over a shared SNR grid.

    The grid is uniform in the MI domain (x_i = 2**(i dv) - 1, spanning
    [0, span * avg_snr]), which lets the IR averages be computed as a
    single FFT correlation per (k, l).  Cumulative integrals of
    pdf * f_{k,l} make region averages O(1) per threshold, which the
    Dinkelbach coordinate search relies on.
    """

    def __init__(self, table: McsTable, K: int, combining: CombiningType,
                 avg_snr: float, n_grid: int = 1 << 15, span: float = 50.0):
        if K < 1:
            raise ValueError("K must be >= 1")
        if not avg_snr > 0:
            raise ValueError("avg_snr must be positive")
        self.table = table
        self.K = K
        self.combining = combining
        self.avg_snr = avg_snr
        self.n_grid = n_grid
        self.span = span

        v, dv = _mi_grid(avg_snr, n_grid, span)
        self.x = np.exp2(v) - 1.0
        L = table.num_rates
        # f_point[k][l] -> array over self.x; k = 1..K (1-based dicts)
        self.f_point = {1: {l: per(l, self.x, table) for l in range(1, L + 1)}}
        for k in range(2, K + 1):
            self.f_point[k] = {}
            if combining is CombiningType.RR:
                for l in range(1, L + 1):
                    self.f_point[k][l] = _rr_cascade_closed_form(l, self.x, k - 1, table, avg_snr)
            else:
                p_s, _ = _mi_sum_density(avg_snr, k - 1, n_grid, span)
                v_ext = np.arange(2 * n_grid) * dv
                with np.errstate(over="ignore"):
                    x_ext = np.exp2(v_ext) - 1.0
                for l in range(1, L + 1):
                    g = per(l, x_ext, table)
                    corr = fftconvolve(g, p_s[::-1], mode="valid")[:n_grid] * dv
                    self.f_point[k][l] = np.clip(corr, 0.0, 1.0)

        pdf = np.exp(-self.x / avg_snr) / avg_snr
        self.cum = {}
        for k in range(2, K + 1):
            self.cum[k] = {}
            for l in range(1, L + 1):
                c = cumulative_trapezoid(pdf * self.f_point[k][l], self.x, initial=0.0)
                self.cum[k][l] = c

    def cum_mass(self, k: int, l: int, a: float, b: float) -> float:
        """Integral of pdf * f_{k,l} over [a, b); k=1 is analytic."""
        if k == 1:
            return per_pdf_mass(l, a, b, self.table, self.avg_snr)
        c = self.cum[k][l]
        hi = c[-1] if math.isinf(b) else float(np.interp(b, self.x, c))
        lo = float(np.interp(a, self.x, c))
        return hi - lo

    def cascade_at(self, l: int, x: float) -> np.ndarray:
        """Pointwise f_{k,l}(x) for k = 1..K by grid interpolation."""
        return np.array([np.interp(x, self.x, self.f_point[k][l])
                         for k in range(1, self.K + 1)])


@dataclass(frozen=True)
class RegionQuantities:
    """Per-rate region probabilities and averaged cascades.

    f has shape (K, L) with f[k-1, l-1] = f_{k,l}; degenerate regions get
    p_l = 0 and f_{k,l} = 0 so downstream sums stay smooth.
    """

    p: np.ndarray
    f: np.ndarray
    t_bar: np.ndarray


def fast_region_quantities(regions: DecisionRegions, K: int, combining: CombiningType,
                           table: McsTable, avg_snr: float,
                           tables: FastFadingTables | None = None) -> RegionQuantities:
    if tables is None:
        tables = FastFadingTables(table, K, combining, avg_snr)
    L = table.num_rates
    p = np.zeros(L)
    f = np.zeros((K, L))
    for l in range(1, L + 1):
        ivs = regions.intervals_for(l)
        p[l - 1] = sum(exp_mass(a, b, avg_snr) for a, b in ivs)
        if p[l - 1] <= 0.0:
            continue
        for k in range(1, K + 1):
            mass = sum(tables.cum_mass(k, l, a, b) for a, b in ivs)
            f[k - 1, l - 1] = min(1.0, max(0.0, mass / p[l - 1]))
    t_bar = 1.0 + f[:K - 1].sum(axis=0) if K > 1 else np.ones(L)
    return RegionQuantities(p=p, f=f, t_bar=t_bar)


def fast_throughput(regions: DecisionRegions, K: int, combining: CombiningType,
                    table: McsTable, avg_snr: float,
                    tables: FastFadingTables | None = None) -> ThroughputEstimate:
    """Renewal-reward throughput over fast fading:
    sum_l R_l (1 - f_{K,l}) p_l / sum_l T_bar_{K,l} p_l."""
    q = fast_region_quantities(regions, K, combining, table, avg_snr, tables)
    rates = np.asarray(table.rates)
    num = float(np.sum(rates * (1.0 - q.f[K - 1]) * q.p))
    den = float(np.sum(q.t_bar * q.p))
    return ThroughputEstimate(value=num / den)


def two_round_bound(regions: DecisionRegions, table: McsTable, avg_snr: float) -> float:
    """Throughput of the hypothetical protocol whose second round always
    succeeds: sum_l R_l p_l / (1 + avg first-round error probability).
    Upper-bounds every HARQ throughput on the same regions."""
    num = 0.0
    f1_bar = 0.0
    for l in range(1, table.num_rates + 1):
        for a, b in regions.intervals_for(l):
            num += table.rate(l) * exp_mass(a, b, avg_snr)
            f1_bar += per_pdf_mass(l, a, b, table, avg_snr)
    return num / (1.0 + f1_bar)
