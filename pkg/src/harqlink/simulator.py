"""Monte Carlo engines: plain AMC/HARQ cycles, packet-dropping HARQ, and
variable-length HARQ with per-block exhaustive scheduling.

Per-round outcomes follow the backward-implication error model: given the
previous rounds failed, round k fails with probability f_k / f_{k-1},
where f_k = PER(aggregate SNR after k rounds).  Sampling one uniform per
cycle against the nested cascade reproduces that law exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .amc import DecisionRegions
from .channel import ChannelConfig, FadingMode, draw_exponential, make_stream
from .coding import CombiningType, McsTable, mutual_information, mutual_information_inv, per
from .harq_analysis import HarqConfig, HarqVariant

_N_BATCHES = 50


@dataclass
class PacketState:
    """Variable-length HARQ buffer entry.

    harq_count = 0 with snr_sigma = 0 marks a fresh packet; assigned_len 0
    means not scheduled in the current block.
    """

    harq_count: int = 0
    first_len: float = 0.0
    snr_sigma: float = 0.0
    assigned_len: float = 0.0


@dataclass(frozen=True)
class SimResult:
    throughput: float
    ci_half_width: float
    blocks: int
    acked_packets: int
    drops: int = 0


def _batch_ci(rewards: np.ndarray, durations: np.ndarray) -> float:
    """3-sigma half width of the ratio estimator via batch means."""
    n = rewards.size
    if n < _N_BATCHES:
        return math.inf
    cut = (n // _N_BATCHES) * _N_BATCHES
    r = rewards[:cut].reshape(_N_BATCHES, -1).sum(axis=1)
    d = durations[:cut].reshape(_N_BATCHES, -1).sum(axis=1)
    ratios = r / np.maximum(d, 1e-300)
    return 3.0 * float(np.std(ratios, ddof=1)) / math.sqrt(_N_BATCHES)


def _classifier(regions: DecisionRegions):
    edges, labels = regions.piecewise()

    def classify_many(g):
        return labels[np.searchsorted(edges, g, side="right") - 1]

    return classify_many


def _per_rows(agg: np.ndarray, l_idx: np.ndarray, table: McsTable) -> np.ndarray:
    """PER of each row's first-round MCS at its per-round aggregate SNRs."""
    th = np.asarray(table.thresholds)[l_idx][:, None]
    if math.isinf(table.a_tilde):
        return np.where(agg < th, 1.0, 0.0)
    with np.errstate(over="ignore"):
        decay = np.exp(-table.a_tilde * (agg / th - 1.0))
    return np.where(agg < th, 1.0, decay)


_SLOW_CYCLES_PER_DRAW = 512


def _simulate_slow_ratio(regions: DecisionRegions, K: int, combining: CombiningType,
                         table: McsTable, channel: ChannelConfig, blocks: int,
                         stream_id: int) -> SimResult:
    """Slow fading: the SNR stays fixed over many consecutive cycles, so the
    long-run throughput is the fading average of per-SNR cycle ratios.  Each
    drawn SNR is held for a run of cycles; the run ratios are averaged."""
    gen = make_stream(channel.seed, stream_id)
    classify_many = _classifier(regions)
    rates = np.asarray(table.rates)
    m = _SLOW_CYCLES_PER_DRAW

    ratio_chunks = []
    total_rounds = 0
    acked = 0
    while total_rounds < blocks:
        n = 256
        g = draw_exponential(gen, channel.avg_snr, n)
        l_hat = classify_many(g)
        if combining is CombiningType.RR:
            agg = g[:, None] * np.arange(1, K + 1)
        else:
            with np.errstate(over="ignore"):
                agg = (1.0 + g[:, None]) ** np.arange(1, K + 1) - 1.0
        f = _per_rows(agg, l_hat - 1, table)
        v = gen.random((n, m))
        n_fail = (v[:, :, None] < f[:, None, :]).sum(axis=2)
        success = n_fail < K
        rounds = np.where(success, n_fail + 1, K)
        reward = np.where(success, rates[l_hat - 1][:, None], 0.0)
        ratio_chunks.append(reward.sum(axis=1) / rounds.sum(axis=1))
        total_rounds += int(rounds.sum())
        acked += int(success.sum())

    ratios = np.concatenate(ratio_chunks)
    cut = (ratios.size // _N_BATCHES) * _N_BATCHES
    means = ratios[:cut].reshape(_N_BATCHES, -1).mean(axis=1)
    return SimResult(
        throughput=float(ratios.mean()),
        ci_half_width=3.0 * float(np.std(means, ddof=1)) / math.sqrt(_N_BATCHES),
        blocks=total_rounds,
        acked_packets=acked,
    )


def simulate_plain(regions: DecisionRegions, harq: HarqConfig, table: McsTable,
                   channel: ChannelConfig, blocks: int, stream_id: int = 0) -> SimResult:
    """Plain AMC-HARQ cycle simulation; the oracle for the analytic paths."""
    if harq.variant is not HarqVariant.PLAIN:
        raise ValueError("simulate_plain requires the plain variant")
    if blocks < 10 ** 5:
        raise ValueError("blocks must be >= 1e5")
    K = harq.max_rounds
    if channel.fading_mode is FadingMode.SLOW:
        return _simulate_slow_ratio(regions, K, harq.combining, table, channel,
                                    blocks, stream_id)
    gen = make_stream(channel.seed, stream_id)
    classify_many = _classifier(regions)
    rates = np.asarray(table.rates)

    rewards, durations = [], []
    total_rounds = 0
    acked = 0
    while total_rounds < blocks:
        n = min(1 << 18, max(1024, blocks - total_rounds))
        snr_rows = draw_exponential(gen, channel.avg_snr, (n, K))
        l_hat = classify_many(snr_rows[:, 0])
        if harq.combining is CombiningType.RR:
            agg = np.cumsum(snr_rows, axis=1)
        else:
            with np.errstate(over="ignore"):
                agg = np.exp2(np.cumsum(np.log2(1.0 + snr_rows), axis=1)) - 1.0
        f = _per_rows(agg, l_hat - 1, table)
        v = gen.random(n)
        n_fail = (v[:, None] < f).sum(axis=1)  # nested events: prefix of failures
        success = n_fail < K
        rounds = np.where(success, n_fail + 1, K)
        reward = np.where(success, rates[l_hat - 1], 0.0)
        rewards.append(reward)
        durations.append(rounds)
        total_rounds += int(rounds.sum())
        acked += int(success.sum())

    rewards = np.concatenate(rewards)
    durations = np.concatenate(durations)
    total = int(durations.sum())
    return SimResult(
        throughput=float(rewards.sum()) / total,
        ci_half_width=_batch_ci(rewards, durations.astype(float)),
        blocks=total,
        acked_packets=acked,
    )


def simulate_packet_drop(regions: DecisionRegions, harq: HarqConfig, table: McsTable,
                         channel: ChannelConfig, blocks: int, stream_id: int = 0) -> SimResult:
    """Packet-dropping HARQ: a cycle is abandoned as soon as the observed
    MCS index exceeds the first-round index, and the fresh cycle starts in
    the same block.  In slow fading the index never changes, so this is
    distributionally identical to the plain protocol."""
    if harq.variant is not HarqVariant.PACKET_DROP:
        raise ValueError("simulate_packet_drop requires the packet-drop variant")
    if blocks < 10 ** 5:
        raise ValueError("blocks must be >= 1e5")
    K = harq.max_rounds
    if channel.fading_mode is FadingMode.SLOW:
        # the observed index never changes within a cycle, so no drop ever
        # fires and the protocol reduces to the plain one
        return _simulate_slow_ratio(regions, K, harq.combining, table, channel,
                                    blocks, stream_id)
    gen = make_stream(channel.seed, stream_id)
    classify_many = _classifier(regions)
    rr = harq.combining is CombiningType.RR
    a_tilde = table.a_tilde
    thresholds = table.thresholds
    rates = table.rates

    gammas = draw_exponential(gen, channel.avg_snr, blocks)
    l_hats = classify_many(gammas)
    u = gen.random(blocks)

    def per_scalar(l, g):
        th = thresholds[l - 1]
        if g < th:
            return 1.0
        if math.isinf(a_tilde):
            return 0.0
        return math.exp(-a_tilde * (g / th - 1.0))

    reward = 0.0
    acked = 0
    drops = 0
    batch_rewards = np.zeros(_N_BATCHES)
    batch_size = blocks // _N_BATCHES

    active = False
    l1 = 0
    k = 0
    hsum = 0.0
    prev_per = 1.0

    for i in range(blocks):
        g = float(gammas[i])
        lh = int(l_hats[i])

        if active and lh > l1:
            drops += 1
            active = False  # restart: this block carries the fresh first round

        if not active:
            l1 = lh
            hsum = g if rr else math.log2(1.0 + g)
            p = per_scalar(l1, g)
            k = 1
            if u[i] >= p:
                reward += rates[l1 - 1]
                acked += 1
                batch_rewards[min(i // batch_size, _N_BATCHES - 1)] += rates[l1 - 1]
            else:
                active = True
                prev_per = p
            continue

        # continuation round
        k += 1
        hsum += g if rr else math.log2(1.0 + g)
        agg = hsum if rr else (2.0 ** hsum - 1.0)
        p_new = per_scalar(l1, agg)
        cond = p_new / prev_per if prev_per > 0.0 else 0.0
        if u[i] < cond:
            if k >= K:
                drops += 1
                active = False
            else:
                prev_per = p_new
        else:
            reward += rates[l1 - 1]
            acked += 1
            batch_rewards[min(i // batch_size, _N_BATCHES - 1)] += rates[l1 - 1]
            active = False

    ratios = batch_rewards / batch_size
    ci = 3.0 * float(np.std(ratios, ddof=1)) / math.sqrt(_N_BATCHES)
    return SimResult(
        throughput=reward / blocks,
        ci_half_width=ci,
        blocks=blocks,
        acked_packets=acked,
        drops=drops,
    )


# ---------------------------------------------------------------------------
# variable-length HARQ
# ---------------------------------------------------------------------------


class _VlContext:
    """Precomputed scheduling machinery for one (harq, table) pair."""

    def __init__(self, harq: HarqConfig, table: McsTable):
        if harq.variant is not HarqVariant.VARIABLE_LENGTH:
            raise ValueError("variable-length context requires the VL variant")
        self.harq = harq
        self.table = table
        r1 = table.rates[0]
        self.primary = tuple(harq.lengths_primary)
        self.retx_lengths = tuple(sorted(set(self.primary) | set(harq.lengths_aux), reverse=True))
        # map primary length -> MCS index via l = R_1 / (length * R_1) = R_1/N_b ...
        self.len_to_l = {}
        for length in self.primary:
            target = r1 / length
            l = min(range(1, table.num_rates + 1), key=lambda j: abs(table.rates[j - 1] - target))
            if abs(table.rates[l - 1] - target) > 1e-9 * target:
                raise ValueError(f"primary length {length} matches no rate in the table")
            self.len_to_l[length] = l
        # integer capacity units
        denom = 1
        for length in self.retx_lengths:
            denom = math.lcm(denom, Fraction(length).limit_denominator(10 ** 6).denominator)
        self.unit = denom
        self.units = {length: round(length * denom) for length in self.retx_lengths}
        self.buffer_cap = harq.max_rounds * len(self.primary)
        # all fresh multisets (counts per primary length) fitting in one block
        self.fresh_sets = self._enumerate_fresh()

    def _enumerate_fresh(self):
        counts_list, costs, npkts = [], [], []

        def rec(i, counts, cost):
            if i == len(self.primary):
                counts_list.append(tuple(counts))
                costs.append(cost)
                npkts.append(sum(counts))
                return
            cu = self.units[self.primary[i]]
            n = 0
            while cost + n * cu <= self.unit:
                rec(i + 1, counts + [n], cost + n * cu)
                n += 1

        rec(0, [], 0)
        return (np.array(counts_list), np.array(costs), np.array(npkts))

    def fresh_lengths_of(self, counts) -> list[float]:
        out = []
        for length, n in zip(self.primary, counts):
            out.extend([length] * n)
        return sorted(out)


def _vl_failure_prob(pkt: PacketState, length: float, gamma: float,
                     table: McsTable, l: int) -> float:
    """Conditional failure probability f(h) if pkt is sent with `length`."""
    if pkt.harq_count == 0:
        snr_prime = gamma  # first transmission: aggregate is the block SNR
        return float(per(l, snr_prime, table))
    snr_prime = mutual_information_inv(
        mutual_information(pkt.snr_sigma) + (length / pkt.first_len) * mutual_information(gamma))
    p_now = float(per(l, pkt.snr_sigma, table))
    if p_now <= 0.0:
        return 0.0
    return float(per(l, snr_prime, table)) / p_now


def vl_schedule(buffer: list[PacketState], gamma: float, harq: HarqConfig,
                table: McsTable, ctx: _VlContext | None = None) -> list[float]:
    """Length assignment maximizing the expected number of decoded packets
    this block, subject to the unit block budget.

    Exhaustive over retransmission candidates (branch and bound keeps it
    exact); interchangeable fresh packets are covered by enumerating all
    feasible fresh multisets.  Ties prefer fewer scheduled packets, then
    the lexicographically smallest assignment vector.
    """
    if ctx is None:
        ctx = _VlContext(harq, table)
    if len(buffer) > ctx.buffer_cap:
        raise ValueError("buffer exceeds its capacity")
    nonfresh_idx = [i for i, p in enumerate(buffer) if p.harq_count > 0]
    fresh_idx = [i for i, p in enumerate(buffer) if p.harq_count == 0]

    succ = np.array([1.0 - per(ctx.len_to_l[length], gamma, table) for length in ctx.primary])
    counts_m, costs_m, npkts_m = ctx.fresh_sets
    fresh_values = counts_m @ succ

    # per-candidate (length, units, value) options, 0-length excluded
    options = []
    for i in nonfresh_idx:
        pkt = buffer[i]
        l = ctx.len_to_l[pkt.first_len]
        opts = []
        for length in ctx.retx_lengths:
            val = 1.0 - _vl_failure_prob(pkt, length, gamma, table, l)
            opts.append((length, ctx.units[length], val))
        options.append(opts)
    opt_best = [max((v for _, _, v in opts), default=0.0) for opts in options]
    suffix_best = [0.0] * (len(options) + 1)
    for i in range(len(options) - 1, -1, -1):
        suffix_best[i] = suffix_best[i + 1] + opt_best[i]

    fresh_memo: dict[tuple[int, int], int] = {}

    def best_fresh(cap_units: int, slots: int) -> int:
        key = (cap_units, slots)
        if key not in fresh_memo:
            mask = (costs_m <= cap_units) & (npkts_m <= slots)
            vals = np.where(mask, fresh_values, -1.0)
            # among max-value multisets prefer fewer packets, then the
            # lexicographically smallest sorted length list
            top = vals.max()
            cand = np.flatnonzero(vals >= top - 1e-12)
            best = min(cand, key=lambda j: (npkts_m[j],
                                            tuple(ctx.fresh_lengths_of(counts_m[j]))))
            fresh_memo[key] = int(best)
        return fresh_memo[key]

    n_slots = len(fresh_idx)
    best_key = None
    best_assign = None

    def consider(nf_lengths: list[float], cap_units: int, value: float):
        nonlocal best_key, best_assign
        j = best_fresh(cap_units, n_slots)
        total = value + float(fresh_values[j])
        fresh_lens = ctx.fresh_lengths_of(counts_m[j])
        assign = [0.0] * len(buffer)
        for idx, length in zip(nonfresh_idx, nf_lengths):
            assign[idx] = length
        pad = [0.0] * (n_slots - len(fresh_lens)) + fresh_lens
        for idx, length in zip(fresh_idx, pad):
            assign[idx] = length
        scheduled = sum(1 for a in assign if a > 0)
        key = (-total, scheduled, tuple(assign))
        if best_key is None or key < best_key:
            best_key, best_assign = key, assign

    def dfs(i: int, nf_lengths: list[float], cap_units: int, value: float):
        if best_key is not None:
            bound = value + suffix_best[i] + float(fresh_values[best_fresh(cap_units, n_slots)])
            if bound < -best_key[0] - 1e-12:
                return
        if i == len(options):
            consider(nf_lengths, cap_units, value)
            return
        dfs(i + 1, nf_lengths + [0.0], cap_units, value)  # unscheduled
        for length, units, val in options[i]:
            if units <= cap_units:
                dfs(i + 1, nf_lengths + [length], cap_units - units, value + val)

    dfs(0, [], ctx.unit, 0.0)
    assert sum(best_assign) <= 1.0 + 1e-9
    return best_assign


def vl_update(buffer: list[PacketState], assignment: list[float], gamma: float,
              outcomes: list[bool], harq: HarqConfig, table: McsTable,
              ctx: _VlContext | None = None) -> tuple[list[PacketState], int, int]:
    """Apply per-packet ACK/NACK outcomes; returns (new buffer, acked, drops).

    ACK removes the packet; NACK folds the round into the aggregate SNR
    and increments the round counter, discarding the packet once the round
    budget is spent.  The buffer is topped up with fresh packets.
    """
    if ctx is None:
        ctx = _VlContext(harq, table)
    if not (len(assignment) == len(outcomes) == len(buffer)):
        raise ValueError("assignment/outcomes must align with the buffer")
    acked = 0
    drops = 0
    new_buffer: list[PacketState] = []
    for pkt, length, ack in zip(buffer, assignment, outcomes):
        if length == 0.0:
            new_buffer.append(pkt)
            continue
        if ack:
            acked += 1
            continue
        first_len = pkt.first_len if pkt.harq_count > 0 else length
        snr_prime = mutual_information_inv(
            mutual_information(pkt.snr_sigma) + (length / first_len) * mutual_information(gamma))
        if pkt.harq_count < harq.max_rounds - 1:
            new_buffer.append(PacketState(harq_count=pkt.harq_count + 1,
                                          first_len=first_len,
                                          snr_sigma=snr_prime))
        else:
            drops += 1
    while len(new_buffer) < ctx.buffer_cap:
        new_buffer.append(PacketState())
    return new_buffer, acked, drops


def simulate_vl(harq: HarqConfig, table: McsTable, channel: ChannelConfig,
                blocks: int, stream_id: int = 0) -> SimResult:
    """Variable-length HARQ over fast fading; throughput is R_1 bits per
    ACKed packet per block."""
    if channel.fading_mode is not FadingMode.FAST:
        raise ValueError("variable-length HARQ is simulated for fast fading only")
    if blocks < 10 ** 5:
        raise ValueError("blocks must be >= 1e5")
    ctx = _VlContext(harq, table)
    gen = make_stream(channel.seed, stream_id)
    gammas = draw_exponential(gen, channel.avg_snr, blocks)
    r1 = table.rates[0]

    buffer = [PacketState() for _ in range(ctx.buffer_cap)]
    acked_total = 0
    drops = 0
    batch_acked = np.zeros(_N_BATCHES)
    batch_size = blocks // _N_BATCHES

    for i in range(blocks):
        g = float(gammas[i])
        assign = vl_schedule(buffer, g, harq, table, ctx)
        outcomes = []
        for pkt, length in zip(buffer, assign):
            if length == 0.0:
                outcomes.append(False)
                continue
            l = ctx.len_to_l[pkt.first_len if pkt.harq_count > 0 else length]
            f = _vl_failure_prob(pkt, length, g, table, l)
            outcomes.append(bool(gen.random() >= f))
        buffer, acked, dropped = vl_update(buffer, assign, g, outcomes, harq, table, ctx)
        drops += dropped
        acked_total += acked
        batch_acked[min(i // batch_size, _N_BATCHES - 1)] += acked

    ratios = r1 * batch_acked / batch_size
    ci = 3.0 * float(np.std(ratios, ddof=1)) / math.sqrt(_N_BATCHES)
    return SimResult(
        throughput=r1 * acked_total / blocks,
        ci_half_width=ci,
        blocks=blocks,
        acked_packets=acked_total,
        drops=drops,
    )
