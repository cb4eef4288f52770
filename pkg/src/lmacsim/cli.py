"""Command line: ``run``, ``verify-schedule`` and ``sweep``."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import engine
from .config import PROTOCOLS, ConfigError, ScenarioConfig, load_config
from .geometry import BlockGrid
from .metrics import SummaryReport
from .schedule import default_schedule, load_schedule_file, verify_schedule

RUN_COLUMNS = (
    "protocol", "seed", "n_nodes", "rate", "energy_total_J", "energy_per_delivered_J",
    "delivered", "generated", "dropped", "collisions", "delay_mean_s", "delay_p95_s",
    "delay_max_s", "awake_fraction_mean",
)
VIOLATION_COLUMNS = ("kind", "blockA_row", "blockA_col", "blockB_row", "blockB_col",
                     "witness_m", "required_m")
SWEEPABLE = ("rate", "theta", "n_nodes", "duty_cycle")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(r: SummaryReport) -> list[str]:
    return [fmt(v) for v in (
        r.protocol, r.seed, r.n_nodes, float(r.rate), r.energy_total, r.energy_per_delivered,
        r.delivered, r.generated, r.dropped, r.collisions, r.delay_mean, r.delay_p95,
        r.delay_max, r.awake_fraction_mean)]


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def apply_sweep_value(cfg: ScenarioConfig, key: str, value: float) -> ScenarioConfig:
    if key == "rate":
        return cfg.replace(rate=float(value))
    if key == "theta":
        return cfg.replace(theta=float(value))
    if key == "n_nodes":
        if float(value) != int(value):
            raise ValueError("n_nodes values must be integers")
        return cfg.replace(n_nodes=int(value))
    if key == "duty_cycle":
        if not 0 < value < 1:
            raise ValueError("duty_cycle values must lie in (0, 1)")
        period = cfg.duty_listen + cfg.duty_sleep
        return cfg.replace(duty_listen=value * period, duty_sleep=(1 - value) * period)
    raise ValueError(f"{key!r} is not sweepable; choose from {', '.join(SWEEPABLE)}")


def _run_one(cfg: ScenarioConfig) -> list[str]:
    report, _ = engine.run(cfg.replace(trace=False))
    return report_row(report)


def sweep(cfg: ScenarioConfig, key: str, values: Sequence[float],
          protocols: Sequence[str] = PROTOCOLS, seeds: Sequence[int] = (1,),
          jobs: int = 1) -> str:
    """CSV table with one row per (value, protocol, seed), in that order."""
    if key not in SWEEPABLE:
        raise ValueError(f"{key!r} is not sweepable; choose from {', '.join(SWEEPABLE)}")
    if not values:
        raise ValueError("sweep needs at least one value")
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    runs = []
    for v in values:
        base = apply_sweep_value(cfg, key, v)
        for proto in protocols:
            for seed in seeds:
                runs.append((v, base.replace(protocol=proto, seed=seed).validate()))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, [c for _, c in runs]))
    else:
        rows = [_run_one(c) for _, c in runs]
    return _csv_text(("param", "value") + RUN_COLUMNS,
                     [[key, fmt(v)] + row for (v, _), row in zip(runs, rows)])


def run_text(cfg: ScenarioConfig) -> tuple[str, Optional[list[str]]]:
    report, trace = engine.run(cfg)
    return _csv_text(RUN_COLUMNS, [report_row(report)]), trace


def verify_text(cfg: ScenarioConfig, schedule_path=None) -> tuple[str, int]:
    grid = BlockGrid.covering(cfg.area_width, cfg.area_height, cfg.block_side)
    if schedule_path:
        sched = load_schedule_file(schedule_path, grid, cfg.slot_duration)
    else:
        sched = default_schedule(grid, cfg.slot_duration)
    violations = verify_schedule(grid, sched, cfg.tx_range)
    rows = [[v.kind, v.a.row, v.a.col, v.b.row, v.b.col, fmt(float(v.witness)), fmt(float(v.required))]
            for v in violations]
    return _csv_text(VIOLATION_COLUMNS, rows), len(violations)


def _parse_values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lmacsim", description="L-MAC wireless sensor network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and print a summary CSV row")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="summary CSV path (default: stdout)")
    r.add_argument("--trace", metavar="PATH", help="write the per-event trace to PATH")
    r.add_argument("--no-trace", action="store_true", help="disable tracing even if the config enables it")
    r.add_argument("--seed", type=int)
    r.add_argument("--protocol", choices=PROTOCOLS)

    v = sub.add_parser("verify-schedule", help="check slot reuse for interference")
    v.add_argument("config")
    v.add_argument("--schedule", help="row,col,inter,intra file instead of the default tiling")
    v.add_argument("-o", "--output")

    s = sub.add_parser("sweep", help="vary one key across protocols and seeds")
    s.add_argument("config")
    s.add_argument("--vary", required=True, help=f"one of {', '.join(SWEEPABLE)}")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--protocols", default=",".join(PROTOCOLS))
    s.add_argument("--seeds", type=int, default=1, help="number of seeds, counting up from the config seed")
    s.add_argument("-j", "--jobs", type=int, default=1)
    s.add_argument("-o", "--output")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            changes = {}
            if args.seed is not None:
                changes["seed"] = args.seed
            if args.protocol:
                changes["protocol"] = args.protocol
            if args.trace:
                changes["trace"] = True
            if args.no_trace:
                changes["trace"] = False
            cfg = cfg.replace(**changes).validate()
            text, trace = run_text(cfg)
            _emit(text, args.output)
            if trace is not None:
                path = args.trace or f"{Path(args.config).stem}.trace"
                Path(path).write_text("\n".join(trace) + "\n")
            return 0

        if args.command == "verify-schedule":
            text, count = verify_text(cfg, args.schedule)
            _emit(text, args.output)
            return 1 if count else 0

        protocols = [p.strip() for p in args.protocols.split(",") if p.strip()]
        bad = [p for p in protocols if p not in PROTOCOLS]
        if bad or not protocols:
            print(f"unknown protocol(s): {', '.join(bad) or '(none given)'}", file=sys.stderr)
            return 2
        seeds = [cfg.seed + i for i in range(args.seeds)]
        text = sweep(cfg, args.vary, _parse_values(args.values), protocols, seeds, args.jobs)
        _emit(text, args.output)
        return 0
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
