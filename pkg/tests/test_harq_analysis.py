import math

import numpy as np
import pytest
from scipy.integrate import quad

from harqlink.amc import amc_throughput, amc_thresholds_exact
from harqlink.channel import make_stream
from harqlink.coding import CombiningType, McsTable, per
from harqlink.harq_analysis import (ErrorCascade, FastFadingTables, HarqConfig,
                                    HarqVariant, exp_mass,
                                    fast_cascade_conditional,
                                    fast_region_quantities, fast_throughput,
                                    per_pdf_mass, slow_cascade,
                                    slow_throughput, slow_throughput_at,
                                    throughput_from_cascade, two_round_bound)

TABLE = McsTable(rates=tuple(l * 0.75 for l in range(1, 6)), a_tilde=4.0)

# independent 30-digit quadrature references (Erlang-average cascade and
# region-averaged slow throughput), frozen here
RR_CASCADE_REF = {  # (l, x, k) at avg_snr = 10
    (3, 0.0, 2): 0.372148164823,
    (3, 0.0, 3): 0.082369547904,
    (3, 0.0, 4): 0.0131832846985,
    (5, 2.0, 3): 0.388026393627,
    (2, 1.0, 2): 0.119741303574,
}
SLOW_IR_K4_AT_10 = 2.07949738614464

# Monte-Carlo-verified regression values of the fast-fading pipeline on
# the exact AMC regions at avg_snr = 10
FAST_RR_K4_AT_10 = 1.9490364880913607
FAST_IR_K4_AT_10 = 1.9621134394682822
TRB_AT_10 = 1.968489989478699


def test_harq_config_validation():
    with pytest.raises(ValueError):
        HarqConfig(combining=CombiningType.IR, max_rounds=0)
    with pytest.raises(ValueError):
        HarqConfig(combining=CombiningType.RR, max_rounds=4,
                   variant=HarqVariant.VARIABLE_LENGTH, lengths_primary=(1.0, 0.5))
    with pytest.raises(ValueError):
        HarqConfig(combining=CombiningType.IR, max_rounds=4,
                   variant=HarqVariant.VARIABLE_LENGTH, lengths_primary=(0.5, 0.25))
    with pytest.raises(ValueError):
        HarqConfig(combining=CombiningType.IR, max_rounds=4,
                   variant=HarqVariant.VARIABLE_LENGTH,
                   lengths_primary=(1.0, 0.5), lengths_aux=(0.75,))
    ok = HarqConfig(combining=CombiningType.IR, max_rounds=4,
                    variant=HarqVariant.VARIABLE_LENGTH,
                    lengths_primary=(1.0, 0.5), lengths_aux=(0.25,))
    assert ok.max_rounds == 4


def test_error_cascade_validation():
    with pytest.raises(ValueError):
        ErrorCascade((0.9, 0.5))
    with pytest.raises(ValueError):
        ErrorCascade((1.0, 0.5, 0.7))
    c = ErrorCascade((1.0, 0.5, 0.2))
    assert c.max_rounds == 2
    assert c[1] == 0.5


def test_exp_mass():
    assert exp_mass(0.0, math.inf, 3.0) == pytest.approx(1.0)
    assert exp_mass(1.0, 2.0, 3.0) == pytest.approx(math.exp(-1 / 3) - math.exp(-2 / 3), rel=1e-12)


def test_per_pdf_mass_matches_quadrature():
    for l, a, b in [(3, 0.0, math.inf), (3, 1.0, 6.0), (5, 10.0, 40.0), (1, 0.0, 0.3)]:
        want, _ = quad(lambda x: per(l, x, TABLE) * math.exp(-x / 7.0) / 7.0,
                       a, 200.0 if math.isinf(b) else b,
                       points=[TABLE.threshold(l)] if b > TABLE.threshold(l) > a and not math.isinf(b) else None,
                       limit=200)
        assert per_pdf_mass(l, a, b, TABLE, 7.0) == pytest.approx(want, abs=1e-9)


def test_slow_cascade_values():
    c = slow_cascade(3, 2.0, 4, CombiningType.RR, TABLE)
    assert c[0] == 1.0
    for k in range(1, 5):
        assert c[k] == pytest.approx(per(3, 2.0 * k, TABLE), rel=1e-12)
    c = slow_cascade(3, 2.0, 4, CombiningType.IR, TABLE)
    for k in range(1, 5):
        assert c[k] == pytest.approx(per(3, 3.0 ** k - 1.0, TABLE), rel=1e-12)


def test_slow_cascade_rr_below_half_threshold_still_fails_twice():
    th = TABLE.threshold(2)
    c = slow_cascade(2, th / 2 * 0.999, 2, CombiningType.RR, TABLE)
    assert c[2] == 1.0


def test_ir_cascade_dominated_by_rr():
    for gamma in (0.3, 1.0, 4.0):
        rr = slow_cascade(4, gamma, 5, CombiningType.RR, TABLE)
        ir = slow_cascade(4, gamma, 5, CombiningType.IR, TABLE)
        for k in range(2, 6):
            assert ir[k] <= rr[k] + 1e-12


def test_throughput_from_cascade():
    assert throughput_from_cascade(2.0, [0.5, 0.25]) == pytest.approx(2.0 * 0.75 / 1.5, rel=1e-12)
    c = ErrorCascade((1.0, 0.5, 0.25))
    assert throughput_from_cascade(2.0, c) == pytest.approx(1.0, rel=1e-12)


def test_counterexample_cascade_decreases_with_extra_round():
    # a valid non-increasing cascade whose third round barely helps: the
    # extra slot cost outweighs the success gain, so throughput drops
    f1, f2, f3 = 0.9, 0.405, 0.4
    assert 1.0 >= f1 >= f2 >= f3
    eta2 = throughput_from_cascade(1.0, [f1, f2])
    eta3 = throughput_from_cascade(1.0, [f1, f2, f3])
    assert eta2 > eta3


def test_slow_throughput_at_reductions():
    assert slow_throughput_at(3, 2.0, 1, CombiningType.IR, TABLE) == pytest.approx(
        TABLE.rate(3) * (1 - per(3, 2.0, TABLE)), rel=1e-12)
    assert slow_throughput_at(5, 1e5, 4, CombiningType.IR, TABLE) == pytest.approx(
        TABLE.rate(5), rel=1e-9)


def test_supermultiplicative_ratio_condition_and_k_monotonicity():
    # ratio condition f_{k+1}/f_k <= f_k/f_{k-1} on a log SNR grid, and the
    # implied monotonicity of the throughput in the round budget
    grid = np.logspace(-2, 2, 50)
    for combining in (CombiningType.RR, CombiningType.IR):
        for l in range(1, 6):
            for g in grid:
                c = slow_cascade(l, float(g), 6, combining, TABLE)
                for k in range(1, 6):
                    if c[k] > 0:
                        assert c[k + 1] * c[k - 1] <= c[k] ** 2 + 1e-12
                etas = [slow_throughput_at(l, float(g), K, combining, TABLE)
                        for K in range(1, 7)]
                assert all(b >= a - 1e-12 for a, b in zip(etas, etas[1:]))


def test_slow_throughput_reference_and_reductions():
    regions = amc_thresholds_exact(TABLE)
    got = slow_throughput(regions, 4, CombiningType.IR, TABLE, 10.0).value
    assert got == pytest.approx(SLOW_IR_K4_AT_10, abs=1e-8)
    # K=1 reduces to AMC
    k1 = slow_throughput(regions, 1, CombiningType.IR, TABLE, 10.0).value
    assert k1 == pytest.approx(amc_throughput(regions, TABLE, 10.0).value, abs=1e-8)
    # K=4 never below K=1 on the same regions
    for avg in (0.5, 3.0, 30.0):
        for combining in (CombiningType.RR, CombiningType.IR):
            a = slow_throughput(regions, 4, combining, TABLE, avg).value
            b = slow_throughput(regions, 1, combining, TABLE, avg).value
            assert a >= b - 1e-9


def test_fast_cascade_k1_and_monotone():
    assert fast_cascade_conditional(3, 2.0, 1, CombiningType.RR, TABLE, 10.0) == pytest.approx(
        per(3, 2.0, TABLE), rel=1e-12)
    for combining in (CombiningType.RR, CombiningType.IR):
        vals = [fast_cascade_conditional(4, 1.0, k, combining, TABLE, 5.0) for k in range(1, 6)]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_fast_cascade_rr_reference_values():
    for (l, x, k), want in RR_CASCADE_REF.items():
        got = fast_cascade_conditional(l, x, k, CombiningType.RR, TABLE, 10.0)
        assert got == pytest.approx(want, rel=1e-8)


def test_fast_cascade_rr_k2_matches_direct_quadrature():
    for l, x in [(2, 0.5), (4, 3.0)]:
        th = TABLE.threshold(l)
        want, _ = quad(lambda u: per(l, x + u, TABLE) * math.exp(-u / 10.0) / 10.0,
                       0.0, 400.0, points=[max(0.0, th - x)], limit=200)
        got = fast_cascade_conditional(l, x, 2, CombiningType.RR, TABLE, 10.0)
        assert got == pytest.approx(want, abs=1e-8)


def test_fast_cascade_against_monte_carlo():
    rng = make_stream(42, 0)
    avg = 10.0
    n = 200_000
    draws = -avg * np.log1p(-rng.random((n, 3)))
    for l, x in [(4, 0.5), (5, 2.0)]:
        mi = math.log2(1.0 + x) + np.cumsum(np.log2(1.0 + draws), axis=1)
        agg_ir = np.exp2(mi) - 1.0
        agg_rr = x + np.cumsum(draws, axis=1)
        for k in (2, 3, 4):
            for combining, agg in ((CombiningType.IR, agg_ir), (CombiningType.RR, agg_rr)):
                sample = per(l, agg[:, k - 2], TABLE)
                emp = float(sample.mean())
                sigma = float(sample.std()) / math.sqrt(n)
                got = fast_cascade_conditional(l, x, k, combining, TABLE, avg)
                assert abs(got - emp) <= 3.0 * sigma + 1e-4


def test_fast_cascade_grid_convergence():
    for combining in (CombiningType.IR,):
        a = fast_cascade_conditional(4, 1.0, 3, combining, TABLE, 5.0, n_grid=1 << 14)
        b = fast_cascade_conditional(4, 1.0, 3, combining, TABLE, 5.0, n_grid=1 << 15)
        assert a == pytest.approx(b, abs=5e-5)


def test_fast_region_quantities_basics():
    regions = amc_thresholds_exact(TABLE)
    q = fast_region_quantities(regions, 4, CombiningType.IR, TABLE, 10.0)
    assert q.p.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(q.f >= 0) and np.all(q.f <= 1)
    # cascade averages decrease in k for every rate
    assert np.all(np.diff(q.f, axis=0) <= 1e-9)
    # f_{1,l} agrees with the closed-form region mass
    t = list(regions.thresholds) + [math.inf]
    for l in range(1, 6):
        want = per_pdf_mass(l, t[l - 1], t[l], TABLE, 10.0) / exp_mass(t[l - 1], t[l], 10.0)
        assert q.f[0, l - 1] == pytest.approx(want, rel=1e-9)
    q1 = fast_region_quantities(regions, 1, CombiningType.IR, TABLE, 10.0)
    assert np.all(q1.t_bar == 1.0)


def test_fast_region_quantities_degenerate_region():
    from harqlink.amc import DecisionRegions, RegionKind
    regions = DecisionRegions(RegionKind.THRESHOLDS, thresholds=(0.0, 1.0, 1.0, 4.0, 9.0))
    q = fast_region_quantities(regions, 3, CombiningType.RR, TABLE, 10.0)
    assert q.p[1] == 0.0
    assert np.all(q.f[:, 1] == 0.0)


def test_fast_throughput_regression_and_mc_agreement():
    regions = amc_thresholds_exact(TABLE)
    assert fast_throughput(regions, 4, CombiningType.RR, TABLE, 10.0).value == pytest.approx(
        FAST_RR_K4_AT_10, rel=1e-5)
    assert fast_throughput(regions, 4, CombiningType.IR, TABLE, 10.0).value == pytest.approx(
        FAST_IR_K4_AT_10, rel=1e-5)


def test_two_round_bound_dominates_harq():
    regions = amc_thresholds_exact(TABLE)
    assert two_round_bound(regions, TABLE, 10.0) == pytest.approx(TRB_AT_10, rel=1e-6)
    for avg in (0.5, 3.16, 10.0, 100.0):
        trb = two_round_bound(regions, TABLE, avg)
        for combining in (CombiningType.RR, CombiningType.IR):
            for K in (2, 4):
                assert trb >= fast_throughput(regions, K, combining, TABLE, avg).value - 1e-9


def test_posterior_rate_identity():
    # two routes to E[R | NACK_1]: region integrals vs Bayes weights
    regions = amc_thresholds_exact(TABLE)
    avg = 50.0
    t = list(regions.thresholds) + [math.inf]
    p = np.array([exp_mass(t[l - 1], t[l], avg) for l in range(1, 6)])
    f1 = np.array([per_pdf_mass(l, t[l - 1], t[l], TABLE, avg) / p[l - 1] for l in range(1, 6)])
    rates = np.asarray(TABLE.rates)
    f1_bar = float(np.sum(f1 * p))
    route_a = float(np.sum(rates * f1 * p)) / f1_bar
    posterior = f1 * p / f1_bar
    route_b = float(np.sum(rates * posterior))
    assert route_a == pytest.approx(route_b, abs=1e-10)
    assert np.all(p > 0)
    assert route_a < TABLE.rates[-1]
