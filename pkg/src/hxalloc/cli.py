"""Command-line front end: analyze, simulate, sweep, report.

analyze writes the allocation-properties table for one fabric size.
simulate replays a JSON scenario file and dumps raw records. sweep runs
a scenario assembled from flags and writes one CSV row per (kind, app,
ranks, replicas, seed). report aggregates a sweep CSV into normalized
scores against a baseline kind. All writers accept "-" for stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from collections import defaultdict
from contextlib import contextmanager

from .allocation import AllocationKind
from .analysis import table1_report
from .harness import (
    APP_NAMES,
    STATIC_APPS,
    AppParams,
    Framework,
    RunRecord,
    ScenarioConfig,
    parse_kinds_spec,
    parse_replicas_spec,
    report_normalized,
    run_scenario,
    scenario_from_json,
    scenario_to_dict,
    sim_config_from_dict,
)
from .topology import NetworkShape

SWEEP_COLUMNS = (
    "kind",
    "app",
    "ranks",
    "replicas",
    "seed",
    "makespan_cycles",
    "extra_cycles",
    "normalized",
)

REPORT_COLUMNS = (
    "kind",
    "app",
    "replicas",
    "seeds",
    "mean_makespan_cycles",
    "normalized",
    "normalized_stddev",
)


@contextmanager
def _open_out(path: str):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def write_sweep_csv(
    fh, records: list[RunRecord], baseline: AllocationKind | None
) -> None:
    """One row per record; the normalized column is filled only when the
    sweep itself contains the baseline kind for that (app, replicas) cell."""
    base_mean: dict[tuple[str, int], float] = {}
    if baseline is not None:
        cells: dict[tuple[str, int], list[int]] = defaultdict(list)
        for rec in records:
            if rec.kind is baseline:
                cells[(rec.app, rec.replicas)].append(rec.makespan_cycles)
        base_mean = {k: statistics.fmean(v) for k, v in cells.items()}
    writer = csv.writer(fh)
    writer.writerow(SWEEP_COLUMNS)
    for rec in records:
        base = base_mean.get((rec.app, rec.replicas))
        normalized = (
            _fmt(base / rec.makespan_cycles)
            if base is not None and rec.makespan_cycles > 0
            else ""
        )
        writer.writerow(
            [
                rec.kind.value,
                rec.app,
                rec.ranks,
                rec.replicas,
                rec.seed,
                rec.makespan_cycles,
                rec.extra_cycles,
                normalized,
            ]
        )


def read_sweep_csv(path: str) -> list[RunRecord]:
    """Load sweep rows back as records; fields the CSV lacks get defaults."""
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            makespan = int(row["makespan_cycles"])
            extra = int(row["extra_cycles"])
            records.append(
                RunRecord(
                    framework=Framework.SCALING,
                    kind=AllocationKind(row["kind"]),
                    app=row["app"],
                    ranks=int(row["ranks"]),
                    replicas=int(row["replicas"]),
                    seed=int(row["seed"]),
                    fabric_partitioning=False,
                    makespan_cycles=makespan,
                    extra_cycles=extra,
                    isolated_cycles=makespan - extra,
                )
            )
    if not records:
        raise ValueError(f"no data rows in {path}")
    return records


def _cmd_analyze(args: argparse.Namespace) -> int:
    shape = NetworkShape(q=2, n=args.n)
    kinds = list(parse_kinds_spec(args.kinds))
    rows = table1_report(shape, kinds=kinds, seeds=list(range(args.seeds)))
    with _open_out(args.out) as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "kind",
                "avg_distance",
                "max_distance",
                "convexity",
                "switch_local",
                "hull_links",
                "partition_bandwidth",
                "pb_stddev",
                "seeds",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.kind.value,
                    _fmt(row.avg_distance),
                    _fmt(row.max_distance),
                    row.convexity.value,
                    row.switch_local,
                    _fmt(row.hull_links),
                    _fmt(row.pb),
                    _fmt(row.pb_stddev),
                    row.seeds_used,
                ]
            )
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    with open(args.config) as fh:
        config = scenario_from_json(fh.read())
    records = run_scenario(config, jobs=args.jobs)
    payload = {
        "config": scenario_to_dict(config),
        "records": [rec.to_dict() for rec in records],
    }
    with _open_out(args.out) as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return 0


def _scenario_from_args(args: argparse.Namespace) -> ScenarioConfig:
    sim_overrides = {"n": args.n, "routing": args.routing}
    if args.m is not None:
        sim_overrides["m"] = args.m
    return ScenarioConfig(
        framework=Framework(args.framework),
        kinds=parse_kinds_spec(args.kind),
        app=args.app,
        ranks=args.ranks,
        replicas=parse_replicas_spec(args.replicas),
        fabric_partitioning=args.partitioning,
        background=args.background,
        seeds=tuple(range(args.seeds)),
        sim=sim_config_from_dict(sim_overrides),
        params=AppParams(
            demand_packets=args.demand,
            chunk_packets=args.chunk_packets,
            allreduce_packets=args.allreduce_packets,
            stencil_packets=args.stencil_packets,
            stencil_rounds=args.stencil_rounds,
            involution_packets=args.involution_packets,
        ),
    )


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _scenario_from_args(args)
    records = run_scenario(config, jobs=args.jobs)
    baseline = AllocationKind(args.baseline) if args.baseline else None
    with _open_out(args.out) as fh:
        write_sweep_csv(fh, records, baseline)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    records = read_sweep_csv(args.infile)
    rows = report_normalized(
        records,
        baseline=AllocationKind(args.baseline),
        geometric=args.geometric,
    )
    with _open_out(args.out) as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.kind.value,
                    row.app,
                    row.replicas,
                    row.seeds,
                    _fmt(row.mean_makespan),
                    _fmt(row.score),
                    _fmt(row.score_stddev),
                ]
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hxalloc",
        description="Allocation analysis and network simulation on 2D HyperX",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="allocation-properties table as CSV")
    pa.add_argument("--n", type=int, default=8, help="switches per dimension")
    pa.add_argument("--kinds", default="all", help='"all" or comma-joined kinds')
    pa.add_argument("--seeds", type=int, default=20, help="seeds for random kinds")
    pa.add_argument("--out", default="-", help="output CSV path or -")
    pa.set_defaults(func=_cmd_analyze)

    ps = sub.add_parser("simulate", help="run a JSON scenario file")
    ps.add_argument("--config", required=True, help="scenario JSON path")
    ps.add_argument("--out", default="-", help="output JSON path or -")
    ps.add_argument("--jobs", type=int, default=1, help="worker processes")
    ps.set_defaults(func=_cmd_simulate)

    pw = sub.add_parser("sweep", help="run a scenario from flags, write CSV")
    pw.add_argument(
        "--framework", required=True, choices=[f.value for f in Framework]
    )
    pw.add_argument("--kind", default="diagonal", help='kind, list, or "all"')
    pw.add_argument("--app", default="random_permutation", choices=APP_NAMES)
    pw.add_argument("--ranks", type=int, default=64)
    pw.add_argument("--replicas", default="1", help='count, list, or range "1..8"')
    pw.add_argument("--seeds", type=int, default=5, help="runs seeds 0..N-1")
    pw.add_argument(
        "--partitioning",
        action="store_true",
        help="give each partition a private VC set",
    )
    pw.add_argument(
        "--background",
        default="random_permutation",
        choices=tuple(STATIC_APPS),
        help="interference background pattern",
    )
    pw.add_argument("--n", type=int, default=8, help="switches per dimension")
    pw.add_argument(
        "--routing", default="omni_war", choices=("min", "min_adaptive", "omni_war")
    )
    pw.add_argument("--m", type=int, default=None, help="deroute budget")
    pw.add_argument("--demand", type=int, default=500, help="static packets/endpoint")
    pw.add_argument("--chunk-packets", type=int, default=1)
    pw.add_argument("--allreduce-packets", type=int, default=8)
    pw.add_argument("--stencil-packets", type=int, default=1)
    pw.add_argument("--stencil-rounds", type=int, default=4)
    pw.add_argument("--involution-packets", type=int, default=1)
    pw.add_argument(
        "--baseline",
        default="diagonal",
        help="kind for the normalized column; empty to skip",
    )
    pw.add_argument("--jobs", type=int, default=1, help="worker processes")
    pw.add_argument("--out", default="-", help="output CSV path or -")
    pw.set_defaults(func=_cmd_sweep)

    pr = sub.add_parser("report", help="normalize a sweep CSV against a baseline")
    pr.add_argument("--in", dest="infile", required=True, help="sweep CSV path")
    pr.add_argument("--baseline", default="diagonal")
    pr.add_argument(
        "--geometric", action="store_true", help="geometric mean across apps"
    )
    pr.add_argument("--out", default="-", help="output CSV path or -")
    pr.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"hxalloc: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
