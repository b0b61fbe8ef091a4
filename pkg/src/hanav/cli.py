"""Command-line entry point: headless runs, benchmarks, and the live service.

Exit codes: 0 success, 2 planner failure (run did not complete), 3 bad
arguments (unknown scenario, invalid mode lock, malformed options).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .metrics import evaluate, markdown_table, rows_to_csv, run_batch
from .modes import PlanningMode
from .scenarios import SCENARIO_NAMES, load_scenario, parse_scenario_text
from .simulator import run_scenario

DEFAULT_PORT = int(os.environ.get("HANAV_PORT", "8701"))

EXIT_OK = 0
EXIT_PLANNER_FAILURE = 2
EXIT_BAD_ARGS = 3


def _load_spec(name: str):
    path = Path(name)
    if path.suffix == ".scn" or path.exists():
        return parse_scenario_text(path.read_text(), maps_dir=path.parent)
    return load_scenario(name)


def _parse_mode_lock(value: str | None):
    if value is None:
        return None
    try:
        mode = PlanningMode(value)
    except ValueError:
        raise SystemExit2(
            f"unknown mode {value!r}; choose from "
            + ", ".join(m.value for m in PlanningMode if m != PlanningMode.BACKOFF)
        )
    if mode == PlanningMode.BACKOFF:
        raise SystemExit2("planning cannot be locked to BackoffRecovery")
    return mode


class SystemExit2(Exception):
    """Bad-arguments error carrying its message."""


def cmd_run(args) -> int:
    spec = _load_spec(args.scenario)
    if args.mode_lock is not None:
        from dataclasses import replace

        mode = _parse_mode_lock(args.mode_lock)
        spec = replace(spec, mode_lock=mode.value)
    trace = run_scenario(spec, seed=args.seed)
    if args.trace is not None:
        out = Path(args.trace)
        out.write_text(trace.to_csv())
        if args.report:
            from .costmap import parse_map_text
            from .report import render_run_report

            grid = parse_map_text(spec.map_text)
            paths = render_run_report(trace, grid, out.with_suffix(""))
            for p in paths:
                print(p)
    row = evaluate(trace)
    status = "completed" if trace.completed else f"failed ({trace.failure})"
    hr = "-" if row.min_hr_dist is None else f"{row.min_hr_dist:.3f} m"
    print(
        f"{spec.name} seed {trace.seed}: {status}, "
        f"path {row.path_length:.2f} m, time {row.total_time:.1f} s, "
        f"min human distance {hr}"
    )
    return EXIT_OK if trace.completed else EXIT_PLANNER_FAILURE


def cmd_bench(args) -> int:
    spec = _load_spec(args.scenario)
    summary = run_batch(spec, repetitions=args.reps, workers=args.workers)
    table = markdown_table([summary])
    if args.out is not None:
        Path(args.out).write_text(table)
        csv_path = Path(args.out).with_suffix(".csv")
        csv_path.write_text(rows_to_csv(summary.rows))
    print(table, end="")
    if summary.failures:
        print(f"{summary.failures}/{len(summary.rows)} runs failed")
    return EXIT_OK if summary.completed else EXIT_PLANNER_FAILURE


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ScenarioService, create_app

    spec = _load_spec(args.scenario)
    if args.external_human is not None:
        ids = {h.id for h in spec.humans if h.controller == "external"}
        if args.external_human not in ids:
            raise SystemExit2(
                f"human {args.external_human!r} is not configured as external"
            )
    service = ScenarioService(spec, seed=args.seed)
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_list_scenarios(_args) -> int:
    for name in SCENARIO_NAMES:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hanav", description="human-aware navigation scenarios"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario headless")
    run_p.add_argument("scenario", help="library name or .scn file path")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--mode-lock", default=None)
    run_p.add_argument("--trace", default=None, help="write the step CSV here")
    run_p.add_argument(
        "--report", action="store_true",
        help="also render trajectory/profile figures next to the trace CSV",
    )
    run_p.set_defaults(func=cmd_run)

    bench_p = sub.add_parser("bench", help="repeat a scenario and summarize")
    bench_p.add_argument("scenario")
    bench_p.add_argument("--reps", type=int, default=10)
    bench_p.add_argument("--workers", type=int, default=1)
    bench_p.add_argument("--out", default=None, help="write the Markdown table here")
    bench_p.set_defaults(func=cmd_bench)

    serve_p = sub.add_parser("serve", help="stream a live run over a websocket")
    serve_p.add_argument("scenario")
    serve_p.add_argument("--seed", type=int, default=None)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=DEFAULT_PORT)
    serve_p.add_argument("--external-human", default=None)
    serve_p.set_defaults(func=cmd_serve)

    list_p = sub.add_parser("list-scenarios", help="print bundled scenario names")
    list_p.set_defaults(func=cmd_list_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())
