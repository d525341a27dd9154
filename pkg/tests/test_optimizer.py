import math

import numpy as np
import pytest

from harqlink.amc import RegionKind, amc_thresholds_exact, classify
from harqlink.coding import CombiningType, McsTable
from harqlink.harq_analysis import FastFadingTables, fast_throughput
from harqlink.optimizer import (fast_F, fast_optimize_regions,
                                slow_optimal_regions)

TABLE = McsTable(rates=tuple(l * 0.75 for l in range(1, 6)), a_tilde=4.0)


def test_slow_regions_require_dense_grid():
    with pytest.raises(ValueError):
        slow_optimal_regions(2, CombiningType.IR, TABLE,
                             snr_grid=np.logspace(-2, 3, 500))


def test_slow_regions_k1_reduce_to_amc_thresholds():
    regions = slow_optimal_regions(1, CombiningType.IR, TABLE)
    amc = amc_thresholds_exact(TABLE).thresholds
    # every rate occupies a single interval whose lower edge is the AMC
    # threshold (boundary refinement tolerance: 1e-6 relative)
    for l in range(1, 6):
        ivs = regions.intervals_for(l)
        assert len(ivs) == 1
        assert ivs[0][0] == pytest.approx(amc[l - 1], rel=1e-4, abs=1e-6)


def test_slow_regions_match_pointwise_argmax():
    regions = slow_optimal_regions(3, CombiningType.IR, TABLE)
    assert regions.kind is RegionKind.INTERVALS
    # spot check: the selected rate achieves the max per-SNR throughput
    from harqlink.harq_analysis import slow_throughput_at
    for g in np.logspace(-1.5, 3, 40):
        chosen = int(classify(float(g), regions))
        etas = [slow_throughput_at(l, float(g), 3, CombiningType.IR, TABLE)
                for l in range(1, 6)]
        assert etas[chosen - 1] >= max(etas) - 1e-9


def test_slow_regions_two_rate_union_structure():
    # with two rates and several rounds the lower rate can win on a
    # detached interval; the result must still partition [0, inf)
    t2 = McsTable(rates=(0.75, 3.75), a_tilde=4.0)
    regions = slow_optimal_regions(4, CombiningType.RR, t2)
    edges = sorted(e for ivs in regions.intervals for iv in ivs for e in iv)
    assert edges[0] == 0.0 and math.isinf(edges[-1])
    # interior edges appear exactly twice (shared by adjacent intervals)
    interior = [e for e in edges[1:-1]]
    assert all(interior.count(e) == 2 for e in set(interior))


def test_fast_f_validates_threshold_vector():
    tables = FastFadingTables(TABLE, 2, CombiningType.RR, 10.0)
    with pytest.raises(ValueError):
        fast_F([1.0, 2.0, 3.0, 4.0, 5.0], 0.5, 2, CombiningType.RR, TABLE,
               10.0, tables=tables)
    with pytest.raises(ValueError):
        fast_F([0.0, 3.0, 2.0, 4.0, 5.0], 0.5, 2, CombiningType.RR, TABLE,
               10.0, tables=tables)


def test_fast_f_sign_brackets_throughput():
    tables = FastFadingTables(TABLE, 4, CombiningType.IR, 10.0)
    amc = amc_thresholds_exact(TABLE).thresholds
    eta = fast_throughput(amc_thresholds_exact(TABLE), 4, CombiningType.IR,
                          TABLE, 10.0, tables=tables).value
    assert fast_F(amc, eta - 1e-3, 4, CombiningType.IR, TABLE, 10.0,
                  tables=tables) > 0
    assert fast_F(amc, eta + 1e-3, 4, CombiningType.IR, TABLE, 10.0,
                  tables=tables) < 0
    assert fast_F(amc, eta, 4, CombiningType.IR, TABLE, 10.0,
                  tables=tables) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("combining", [CombiningType.RR, CombiningType.IR])
def test_optimized_regions_beat_amc_regions(combining):
    avg = 10.0
    tables = FastFadingTables(TABLE, 4, combining, avg)
    res = fast_optimize_regions(4, combining, TABLE, avg, tables=tables)
    t = res.regions.thresholds
    assert t[0] == 0.0
    assert all(b >= a for a, b in zip(t, t[1:]))
    baseline = fast_throughput(amc_thresholds_exact(TABLE), 4, combining,
                               TABLE, avg, tables=tables).value
    assert res.throughput.value >= baseline - 1e-9
    assert res.kkt_ok


def test_optimized_regions_high_snr_non_degenerate():
    avg = 10.0 ** 2.5  # 25 dB
    tables = FastFadingTables(TABLE, 4, CombiningType.IR, avg)
    res = fast_optimize_regions(4, CombiningType.IR, TABLE, avg, tables=tables)
    t = res.regions.thresholds
    assert all(b > a for a, b in zip(t, t[1:]))
    assert res.kkt_ok


def test_optimized_thresholds_shift_with_average_snr():
    # with retransmissions available the optimizer is more aggressive than
    # single-shot rate selection at low average SNR (every threshold moves
    # down) and more conservative at high SNR for the lower thresholds
    amc = amc_thresholds_exact(TABLE).thresholds
    res_lo = fast_optimize_regions(4, CombiningType.IR, TABLE, 10.0 ** -0.5)
    res_hi = fast_optimize_regions(4, CombiningType.IR, TABLE, 10.0 ** 1.5)
    assert all(a <= b + 1e-6 for a, b in zip(res_lo.regions.thresholds, amc))
    assert all(a >= b - 1e-6
               for a, b in zip(res_hi.regions.thresholds[:3], amc[:3]))


@pytest.mark.xfail(strict=True, reason=(
    "the verified optimum at 15 dB keeps its two upper thresholds slightly "
    "below the single-shot values (clamping them up loses ~1.2e-3 "
    "throughput), so the per-threshold ordering does not hold there"))
def test_optimized_thresholds_all_above_single_shot_at_high_snr():
    amc = amc_thresholds_exact(TABLE).thresholds
    res = fast_optimize_regions(4, CombiningType.IR, TABLE, 10.0 ** 1.5)
    assert all(a >= b - 1e-6 for a, b in zip(res.regions.thresholds, amc))


def test_restart_stability_across_seeds():
    avg = 10.0
    tables = FastFadingTables(TABLE, 4, CombiningType.IR, avg)
    a = fast_optimize_regions(4, CombiningType.IR, TABLE, avg, seed=0,
                              tables=tables).throughput.value
    b = fast_optimize_regions(4, CombiningType.IR, TABLE, avg, seed=123,
                              tables=tables).throughput.value
    assert a == pytest.approx(b, abs=1e-6)
