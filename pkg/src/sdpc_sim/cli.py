"""Command-line front end: single runs, velocity sweeps, grouped runs.

Every run writes a self-contained directory named ``<config-hash>-s<seed>``
so reruns of the same scenario land in the same place and two different
scenarios never collide.  CSV logs carry the raw record; ``metrics.json``
and ``report.txt`` embed the fully resolved config so a result can never
be orphaned from the settings that produced it.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

from .baselines import POLICIES
from .config import ScenarioConfig, load_config
from .engine import Engine, RunResult
from .metrics import (
    GROUP_PROFILES,
    NA,
    AggregateMetrics,
    GroupedReport,
    MetricsReport,
    aggregate_reports,
    grouped_run_aggregate,
    write_cluster_rows,
    write_packets,
    write_transitions,
)

SWEEP_FIELDS = (
    "policy",
    "max_velocity",
    "seed",
    "ch_change_rate",
    "avg_ch_duration",
    "avg_cm_duration",
    "overhead",
    "avg_clusters",
)

METRIC_NAMES = ("ch_change_rate", "avg_ch_duration", "avg_cm_duration", "overhead", "avg_clusters")

PLOT_FILES = {
    "fig6_ch_change_rate.csv": "ch_change_rate",
    "fig7_ch_duration.csv": "avg_ch_duration",
    "fig8_cm_duration.csv": "avg_cm_duration",
    "fig9_overhead.csv": "overhead",
}

DEFAULT_VELOCITIES = "10,15,20,25,30,35"
DEFAULT_POLICIES = ",".join(POLICIES)
DEFAULT_SEEDS = "1..5"


class SweepError(RuntimeError):
    """A sweep cell failed; the message names the cell."""


def _fmt(value: float | None) -> str:
    return NA if value is None else f"{value:.6g}"


def _metric_values(report: MetricsReport | AggregateMetrics) -> dict[str, float | None]:
    return {name: getattr(report, name) for name in METRIC_NAMES}


def execute_run(config: ScenarioConfig, out_root: Path, write_artifacts: bool = True) -> RunResult:
    """Run one scenario and, normally, persist its artifact directory.

    Nothing is written until the run has finished, so a crash mid-run
    leaves no half-filled directory behind.
    """

    result = Engine(config).run()
    if write_artifacts:
        run_dir = out_root / config.run_name
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(config.to_json())
        write_transitions(run_dir / "transitions.csv", result.transitions)
        write_cluster_rows(run_dir / "clusters.csv", result.cluster_rows)
        dt = config.time_step
        write_packets(
            run_dir / "packets.csv",
            [(round(tick * dt, 9), cell) for tick, cell in result.ledger.per_tick()],
        )
        (run_dir / "metrics.json").write_text(_metrics_json(result))
        (run_dir / "report.txt").write_text(render_report(result))
    return result


def _metrics_json(result: RunResult) -> str:
    report = result.report
    doc = {
        "config": result.config.to_dict(),
        "window": {"start": result.window.start, "end": result.window.end},
        "metrics": _metric_values(report),
        "tallies": {
            "ch_changes": report.ch_changes,
            "ch_duration_total": report.ch_duration_total,
            "ch_episodes": report.ch_episodes,
            "cm_duration_total": report.cm_duration_total,
            "cm_episodes": report.cm_episodes,
            "packets": dataclasses.asdict(report.packets),
        },
        "violations": [dataclasses.asdict(v) for v in result.violations],
    }
    # wall time stays off disk: artifacts of equal runs must be byte-equal
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_report(result: RunResult) -> str:
    """One human-readable document per run, config included."""

    report = result.report
    lines = [
        f"run {result.config.run_name}",
        f"window: {result.window.start:g} .. {result.window.end:g} s"
        f" ({result.window.length:g} s measured)",
        f"ch_change_rate:  {_fmt(report.ch_change_rate)} /s",
        f"avg_ch_duration: {_fmt(report.avg_ch_duration)} s"
        f" ({report.ch_episodes} episodes)",
        f"avg_cm_duration: {_fmt(report.avg_cm_duration)} s"
        f" ({report.cm_episodes} episodes)",
        f"overhead:        {_fmt(report.overhead)}"
        f" ({report.packets.control} control / {report.packets.beacon} beacon packets)",
        f"avg_clusters:    {_fmt(report.avg_clusters)}",
        f"invariant violations: {len(result.violations)}",
        "",
        "config:",
    ]
    for key, value in sorted(result.config.to_dict().items()):
        lines.append(f"  {key}: {value}")
    return "\n".join(lines) + "\n"


def parse_int_list(text: str) -> list[int]:
    """Accept both ``1,2,5`` and the range shorthand ``1..5``."""

    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            start, stop = int(lo), int(hi)
            if stop < start:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(start, stop + 1))
        else:
            out.append(int(part))
    return out


def parse_float_list(text: str) -> list[float]:
    return [float(part.strip()) for part in text.split(",")]


def parse_name_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def run_sweep(
    base: ScenarioConfig,
    velocities: Sequence[float],
    policies: Sequence[str],
    seeds: Sequence[int],
    out_root: Path,
    keep_runs: bool = False,
    progress: Callable[[str], None] | None = None,
) -> list[dict[str, object]]:
    """Cross-product of runs; returns the sweep rows, per-run then averaged.

    Per-run artifact directories are skipped by default: a full sweep is
    120 runs and the row data is what the sweep exists to produce.
    """

    if not velocities or not policies or not seeds:
        raise ValueError("sweep needs at least one velocity, policy and seed")
    rows: list[dict[str, object]] = []
    averaged: list[dict[str, object]] = []
    for policy in policies:
        for velocity in velocities:
            reports: list[MetricsReport] = []
            for seed in seeds:
                config = dataclasses.replace(
                    base, policy=policy, max_velocity=velocity, seed=seed
                )
                started = time.perf_counter()
                try:
                    result = execute_run(config, out_root, write_artifacts=keep_runs)
                except Exception as exc:
                    raise SweepError(
                        f"sweep cell policy={policy} max_velocity={velocity:g} "
                        f"seed={seed} failed: {exc}"
                    ) from exc
                reports.append(result.report)
                rows.append(
                    {
                        "policy": policy,
                        "max_velocity": velocity,
                        "seed": seed,
                        **_metric_values(result.report),
                    }
                )
                if progress is not None:
                    progress(
                        f"policy={policy} v={velocity:g} seed={seed}"
                        f" rate={_fmt(result.report.ch_change_rate)}"
                        f" ({time.perf_counter() - started:.1f}s)"
                    )
            averaged.append(
                {
                    "policy": policy,
                    "max_velocity": velocity,
                    "seed": "avg",
                    **_metric_values(aggregate_reports(reports)),
                }
            )
    return rows + averaged


def write_sweep_csv(path: Path, rows: Sequence[dict[str, object]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    NA if row[field] is None else row[field]
                    for field in SWEEP_FIELDS
                ]
            )


def write_plot_data(
    directory: Path,
    rows: Sequence[dict[str, object]],
    velocities: Sequence[float],
    policies: Sequence[str],
) -> None:
    """Figure-shaped pivots: one file per metric, velocity rows, policy columns."""

    directory.mkdir(parents=True, exist_ok=True)
    averaged = {
        (row["policy"], row["max_velocity"]): row
        for row in rows
        if row["seed"] == "avg"
    }
    for filename, metric in PLOT_FILES.items():
        with open(directory / filename, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["max_velocity", *policies])
            for velocity in velocities:
                line: list[object] = [velocity]
                for policy in policies:
                    value = averaged[(policy, velocity)][metric]
                    line.append(NA if value is None else value)
                writer.writerow(line)


def group_sizes(total: int) -> list[int]:
    """Split the fleet in three, front-loading the remainder (100 -> 34/33/33)."""

    base, rem = divmod(total, 3)
    return [base + 1 if i < rem else base for i in range(3)]


def run_grouped(
    base: ScenarioConfig, out_root: Path, progress: Callable[[str], None] | None = None
) -> tuple[dict[str, RunResult], GroupedReport]:
    """Three per-profile runs, each over a 200 s window, plus the composite.

    Each group inherits the base config but runs its own third of the
    fleet with its own turn behavior, and the run is trimmed so the
    measurement window is exactly 200 s regardless of the base duration.
    """

    sizes = group_sizes(base.vehicle_count)
    results: dict[str, RunResult] = {}
    for profile, count in zip(GROUP_PROFILES, sizes):
        config = dataclasses.replace(
            base,
            turn_profile=profile,
            vehicle_count=count,
            sim_duration=base.window_floor + 200.0,
        )
        results[profile] = execute_run(config, out_root / profile)
        if progress is not None:
            progress(
                f"group {profile}: {count} vehicles,"
                f" rate={_fmt(results[profile].report.ch_change_rate)}"
            )
    grouped = grouped_run_aggregate({p: r.report for p, r in results.items()})
    return results, grouped


def _grouped_json(
    base: ScenarioConfig, results: dict[str, RunResult], grouped: GroupedReport
) -> str:
    doc = {
        "config": base.to_dict(),
        "groups": {
            profile: {
                "vehicle_count": result.config.vehicle_count,
                "window": {"start": result.window.start, "end": result.window.end},
                "metrics": _metric_values(result.report),
            }
            for profile, result in results.items()
        },
        "composite": _metric_values(grouped.composite),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdpc-sim",
        description="Deterministic discrete-time simulator of speed-delta "
        "predictive clustering for vehicular networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="scenario JSON; omit for defaults")
        p.add_argument("--out", type=Path, default=Path("runs"), help="output root directory")
        p.add_argument("--quiet", action="store_true", help="suppress progress lines")

    p_run = sub.add_parser("run", help="execute one scenario and write its artifacts")
    add_common(p_run)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--policy", choices=sorted(POLICIES), default=None)
    p_run.add_argument("--max-velocity", type=float, default=None)

    p_sweep = sub.add_parser("sweep", help="cross-product of (policy, velocity, seed) runs")
    add_common(p_sweep)
    p_sweep.add_argument("--velocities", default=DEFAULT_VELOCITIES, help="comma list of m/s values")
    p_sweep.add_argument("--policies", default=DEFAULT_POLICIES, help="comma list of policy names")
    p_sweep.add_argument("--seeds", default=DEFAULT_SEEDS, help="comma list or A..B range")
    p_sweep.add_argument(
        "--emit-plot-data", type=Path, default=None, metavar="DIR",
        help="also write per-figure pivot CSVs into DIR",
    )
    p_sweep.add_argument(
        "--keep-runs", action="store_true",
        help="write the full artifact directory for every cell",
    )

    p_grouped = sub.add_parser(
        "grouped-run",
        help="three-group run (straight/occasional/frequent thirds) with a composite report",
    )
    add_common(p_grouped)
    p_grouped.add_argument("--seed", type=int, default=None, help="override the config seed")

    return parser


def _load(args: argparse.Namespace) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides: dict[str, object] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "policy", None) is not None:
        overrides["policy"] = args.policy
    if getattr(args, "max_velocity", None) is not None:
        overrides["max_velocity"] = args.max_velocity
    return dataclasses.replace(config, **overrides) if overrides else config


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    echo = (lambda line: None) if args.quiet else lambda line: print(line, file=sys.stderr)
    try:
        config = _load(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        result = execute_run(config, args.out)
        echo(f"completed in {result.elapsed:.2f} s")
        print(render_report(result), end="")
        return 0

    if args.command == "sweep":
        try:
            velocities = parse_float_list(args.velocities)
            policies = parse_name_list(args.policies)
            seeds = parse_int_list(args.seeds)
            unknown = [p for p in policies if p not in POLICIES]
            if unknown:
                raise ValueError(f"unknown policies: {unknown}")
        except ValueError as exc:
            print(f"sweep arguments: {exc}", file=sys.stderr)
            return 2
        args.out.mkdir(parents=True, exist_ok=True)
        try:
            rows = run_sweep(
                config, velocities, policies, seeds, args.out,
                keep_runs=args.keep_runs, progress=echo,
            )
        except SweepError as exc:
            print(str(exc), file=sys.stderr)
            return 1
        sweep_path = args.out / "sweep.csv"
        write_sweep_csv(sweep_path, rows)
        if args.emit_plot_data is not None:
            write_plot_data(args.emit_plot_data, rows, velocities, policies)
        print(sweep_path)
        return 0

    # grouped-run
    grouped_dir = args.out / f"grouped-{config.config_hash}-s{config.seed}"
    grouped_dir.mkdir(parents=True, exist_ok=True)
    results, grouped = run_grouped(config, grouped_dir, progress=echo)
    (grouped_dir / "grouped_metrics.json").write_text(_grouped_json(config, results, grouped))
    composite = grouped.composite
    print(f"grouped run {grouped_dir.name}")
    for name in METRIC_NAMES:
        print(f"  {name}: {_fmt(getattr(composite, name))}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
