"""Command-line interface: sweeps, threshold dumps, and self-verification.

dB <-> linear SNR conversion happens here and nowhere else.  Output CSV is
deterministic for a fixed spec: rows are sorted by (scheme, snr) and each
sweep point derives its RNG stream from (seed, point index).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import amc as amc_mod
from .amc import DecisionRegions, RegionKind
from .channel import ChannelConfig, FadingMode, db_to_linear, linear_to_db
from .coding import CombiningType, McsTable
from .harq_analysis import (FastFadingTables, HarqConfig, HarqVariant,
                            fast_throughput, slow_throughput, two_round_bound)
from .optimizer import fast_optimize_regions, slow_optimal_regions
from .simulator import simulate_packet_drop, simulate_vl

SCHEMES = ("amc", "harq-rr", "harq-ir", "harq-2r-bound", "pd-harq", "vl-harq")
REGION_SOURCES = ("amc-exact", "amc-closed-form", "per-target", "optimized")
CSV_HEADER = "snr_avg_db,scheme,combining,a_tilde,K,region_source,throughput,ci_half_width,blocks"

DEFAULT_RATES = tuple(l * 0.75 for l in range(1, 6))
DEFAULT_VL_PRIMARY = (1.0, 1 / 2, 1 / 3, 1 / 4, 1 / 5)
DEFAULT_VL_AUX = (1 / 8, 1 / 12, 1 / 16)


@dataclass(frozen=True)
class SweepSpec:
    snr_db_start: float
    snr_db_stop: float
    snr_db_step: float
    schemes: tuple[str, ...]
    region_source: str = "amc-exact"
    a_tilde: float = 4.0
    K: int = 4
    mc_blocks: int = 10 ** 5
    seed: int = 0
    fading: str = "fast"
    rates: tuple[float, ...] = DEFAULT_RATES
    per_target_ploss: float = 0.1
    per_target_rounds: int = 1
    output: str = "-"

    def __post_init__(self):
        if self.snr_db_step <= 0:
            raise ValueError("snr step must be > 0")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")
        if self.region_source not in REGION_SOURCES:
            raise ValueError(f"unknown region source {self.region_source}")
        mc = {"pd-harq", "vl-harq"} & set(self.schemes)
        if mc and self.mc_blocks < 10 ** 5:
            raise ValueError("mc_blocks must be >= 1e5 for Monte Carlo schemes")

    def snr_points_db(self) -> list[float]:
        n = int(round((self.snr_db_stop - self.snr_db_start) / self.snr_db_step))
        return [self.snr_db_start + i * self.snr_db_step for i in range(n + 1)
                if self.snr_db_start + i * self.snr_db_step <= self.snr_db_stop + 1e-9]


def _combining_for(scheme: str) -> CombiningType | None:
    if scheme in ("harq-rr",):
        return CombiningType.RR
    if scheme in ("harq-ir", "vl-harq"):
        return CombiningType.IR
    return None


def _regions_for(spec: SweepSpec, table: McsTable, combining: CombiningType | None,
                 avg_snr: float) -> DecisionRegions:
    if spec.region_source == "amc-exact" or combining is None:
        return amc_mod.amc_thresholds_exact(table)
    if spec.region_source == "amc-closed-form":
        return amc_mod.amc_thresholds_closed_form(table)
    if spec.region_source == "per-target":
        return amc_mod.amc_thresholds_per_target(table, spec.per_target_ploss,
                                                 spec.per_target_rounds)
    if spec.fading == "slow":
        return slow_optimal_regions(spec.K, combining, table)
    return fast_optimize_regions(spec.K, combining, table, avg_snr, seed=spec.seed).regions


def _sweep_point(spec: SweepSpec, scheme: str, snr_db: float, point_idx: int) -> dict:
    table = McsTable(rates=spec.rates, a_tilde=spec.a_tilde)
    avg = db_to_linear(snr_db)
    combining = _combining_for(scheme)
    fading = FadingMode.SLOW if spec.fading == "slow" else FadingMode.FAST
    row = {
        "snr_avg_db": snr_db, "scheme": scheme,
        "combining": combining.value if combining else "",
        "a_tilde": spec.a_tilde, "K": spec.K,
        "region_source": spec.region_source,
        "ci_half_width": "", "blocks": "",
    }
    if scheme == "amc":
        row["throughput"] = amc_mod.amc_throughput(
            _regions_for(spec, table, None, avg), table, avg).value
    elif scheme in ("harq-rr", "harq-ir"):
        regions = _regions_for(spec, table, combining, avg)
        if fading is FadingMode.SLOW:
            row["throughput"] = slow_throughput(regions, spec.K, combining, table, avg).value
        else:
            row["throughput"] = fast_throughput(regions, spec.K, combining, table, avg).value
    elif scheme == "harq-2r-bound":
        comb = CombiningType.IR if spec.region_source == "optimized" else None
        regions = _regions_for(spec, table, comb, avg)
        row["throughput"] = two_round_bound(regions, table, avg)
    elif scheme == "pd-harq":
        comb = CombiningType.IR  # combining used for aggregation in the sim
        regions = _regions_for(spec, table, None, avg)
        harq = HarqConfig(combining=comb, max_rounds=spec.K, variant=HarqVariant.PACKET_DROP)
        res = simulate_packet_drop(regions, harq, table,
                                   ChannelConfig(avg, fading, spec.seed),
                                   spec.mc_blocks, stream_id=point_idx)
        row.update(throughput=res.throughput, ci_half_width=res.ci_half_width,
                   blocks=res.blocks, combining="ir")
    elif scheme == "vl-harq":
        harq = HarqConfig(combining=CombiningType.IR, max_rounds=spec.K,
                          variant=HarqVariant.VARIABLE_LENGTH,
                          lengths_primary=DEFAULT_VL_PRIMARY, lengths_aux=DEFAULT_VL_AUX)
        res = simulate_vl(harq, table, ChannelConfig(avg, FadingMode.FAST, spec.seed),
                          spec.mc_blocks, stream_id=point_idx)
        row.update(throughput=res.throughput, ci_half_width=res.ci_half_width,
                   blocks=res.blocks)
    return row


def _fmt(x) -> str:
    if x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def run_sweep(spec: SweepSpec) -> list[str]:
    """All sweep rows as CSV lines (header included), sorted by (scheme, snr)."""
    points = [(scheme, snr_db) for scheme in sorted(spec.schemes)
              for snr_db in spec.snr_points_db()]
    workers = int(os.environ.get("HARQLINK_WORKERS", os.cpu_count() or 1))
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point_star,
                                 [(spec, s, g, i) for i, (s, g) in enumerate(points)]))
    else:
        rows = [_sweep_point(spec, s, g, i) for i, (s, g) in enumerate(points)]
    rows.sort(key=lambda r: (r["scheme"], r["snr_avg_db"]))
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in CSV_HEADER.split(",")))
    return lines


def _sweep_point_star(args):
    return _sweep_point(*args)


def emit_thresholds(spec: SweepSpec) -> list[str]:
    """Per-snr threshold vectors (or interval unions) as CSV lines."""
    table = McsTable(rates=spec.rates, a_tilde=spec.a_tilde)
    lines = ["snr_avg_db,scheme,l,gamma_l_db,degenerate"]
    schemes = [s for s in sorted(spec.schemes) if s != "harq-2r-bound"]
    for snr_db in spec.snr_points_db():
        avg = db_to_linear(snr_db)
        for scheme in schemes:
            combining = _combining_for(scheme)
            regions = _regions_for(spec, table, combining, avg)
            if regions.kind is RegionKind.THRESHOLDS:
                t = regions.thresholds + (math.inf,)
                for l in range(1, table.num_rates + 1):
                    deg = 1 if t[l] <= t[l - 1] else 0
                    lines.append(f"{_fmt(float(snr_db))},{scheme},{l},"
                                 f"{_db_str(t[l - 1])},{deg}")
            else:
                for l in range(1, table.num_rates + 1):
                    ivs = regions.intervals_for(l)
                    ser = ";".join(f"{_db_str(a)}..{_db_str(b)}" for a, b in ivs)
                    deg = 1 if not ivs else 0
                    lines.append(f"{_fmt(float(snr_db))},{scheme},{l},{ser},{deg}")
    return lines


def _db_str(x: float) -> str:
    if x == 0.0:
        return "-inf"
    if math.isinf(x):
        return "inf"
    return f"{linear_to_db(x):.12g}"


def _verify() -> int:
    """Fast self-checks of the core invariants; one line per check."""
    from .coding import aggregate_snr, per, snr_margin_delta
    from .harq_analysis import slow_throughput_at

    table = McsTable(rates=DEFAULT_RATES, a_tilde=4.0)
    checks = []
    d = 10 * math.log10(snr_margin_delta(1e-2, 4.0))
    checks.append(("snr margin 3.3 dB at a=4", abs(d - 3.3) < 0.05))
    regions = amc_mod.amc_thresholds_exact(table)
    pers = [per(l, regions.thresholds[l - 1], table) for l in range(2, 6)]
    checks.append(("AMC boundary PERs ~ 1-R_{l-1}/R_l",
                   all(abs(p - (1 - (l - 1) / l)) < 0.01 for p, l in zip(pers, range(2, 6)))))
    checks.append(("IR aggregate beats RR",
                   aggregate_snr([1, 1], CombiningType.IR) > aggregate_snr([1, 1], CombiningType.RR)))
    eta = [slow_throughput_at(3, 2.0, k, CombiningType.IR, table) for k in range(1, 7)]
    checks.append(("slow throughput non-decreasing in K",
                   all(b >= a - 1e-12 for a, b in zip(eta, eta[1:]))))
    th = amc_mod.amc_throughput(regions, table, 10.0).value
    checks.append(("AMC throughput within (0, R_L)", 0.0 < th < DEFAULT_RATES[-1]))
    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok &= passed
    return 0 if ok else 1


def _load_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def _build_spec(args) -> SweepSpec:
    cfg = _load_config(args.config) if args.config else {}

    def pick(name, flag, cast, default):
        if flag is not None:
            return flag
        if name in cfg:
            return cast(cfg[name])
        return default

    snr = pick("snr-db", args.snr_db, str, "-5:1:30")
    try:
        start, step, stop = (float(x) for x in snr.split(":"))
    except ValueError as exc:
        raise ValueError(f"bad --snr-db spec {snr!r} (want start:step:stop)") from exc
    schemes = pick("schemes", args.schemes, str, "amc")
    rates = pick("rates", args.rates, str, None)
    a_tilde = pick("a-tilde", args.a_tilde, str, "4")
    return SweepSpec(
        snr_db_start=start, snr_db_step=step, snr_db_stop=stop,
        schemes=tuple(s.strip() for s in schemes.split(",") if s.strip()),
        region_source=pick("regions", args.regions, str, "amc-exact"),
        a_tilde=math.inf if a_tilde in ("inf", "Inf") else float(a_tilde),
        K=int(pick("k", args.k, int, 4)),
        mc_blocks=int(pick("mc-blocks", args.mc_blocks, int, 10 ** 5)),
        seed=int(pick("seed", args.seed, int, 0)),
        fading=pick("fading", args.fading, str, "fast"),
        rates=tuple(float(r) for r in rates.split(",")) if rates else DEFAULT_RATES,
        per_target_ploss=float(pick("per-target-ploss", args.per_target_ploss, float, 0.1)),
        per_target_rounds=int(pick("per-target-rounds", args.per_target_rounds, int, 1)),
        output=pick("out", args.out, str, "-"),
    )


def _write(lines: list[str], output: str):
    text = "\n".join(lines) + "\n"
    if output == "-":
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _add_common(p):
    p.add_argument("--snr-db", help="start:step:stop in dB", default=None)
    p.add_argument("--schemes", default=None, help=f"comma list of {','.join(SCHEMES)}")
    p.add_argument("--regions", default=None, choices=REGION_SOURCES)
    p.add_argument("--a-tilde", default=None, help="PER decay (number or 'inf')")
    p.add_argument("--k", type=int, default=None, help="max HARQ rounds")
    p.add_argument("--mc-blocks", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fading", default=None, choices=("fast", "slow"))
    p.add_argument("--rates", default=None, help="comma list of rates (bits/symbol)")
    p.add_argument("--per-target-ploss", type=float, default=None)
    p.add_argument("--per-target-rounds", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.add_argument("--out", default=None, help="output CSV path ('-' for stdout)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="harqlink")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("sweep", help="throughput sweep to CSV"))
    _add_common(sub.add_parser("thresholds", help="decision-region dump to CSV"))
    sub.add_parser("verify", help="run quick self-checks")
    args = parser.parse_args(argv)

    if args.command == "verify":
        return _verify()
    try:
        spec = _build_spec(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        lines = run_sweep(spec) if args.command == "sweep" else emit_thresholds(spec)
    except (ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    try:
        _write(lines, spec.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
