"""Run evaluation: per-run metrics, batched repetitions, summary tables.

Three metrics are computed from a trace: the total length of the path the
robot drove, the total simulated time to reach the goal, and the minimum
center-to-center human-robot distance seen anywhere in the run.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .simulator import RunTrace, ScenarioSpec, run_scenario

CSV_HEADER = "scenario,seed,completed,collision,path_length_m,total_time_s,min_hr_dist_m"


@dataclass
class MetricsRow:
    """One run reduced to its evaluation numbers."""

    scenario: str
    seed: int
    completed: bool
    collision: bool
    path_length: float
    total_time: float
    min_hr_dist: float | None  # None when the scenario has no humans


def path_length(trace: RunTrace) -> float:
    """Sum of consecutive robot-position distances over the trace."""
    total = 0.0
    for a, b in zip(trace.steps, trace.steps[1:]):
        total += math.hypot(b.robot.x - a.robot.x, b.robot.y - a.robot.y)
    return total


def total_time(trace: RunTrace) -> float:
    """Simulated seconds from start to the last recorded step."""
    return float(trace.steps[-1].t) if trace.steps else 0.0


def min_hr_dist(trace: RunTrace) -> float | None:
    """Closest center-to-center approach to any human over the whole run."""
    best = None
    for s in trace.steps:
        for _, p in s.humans:
            d = math.hypot(p.x - s.robot.x, p.y - s.robot.y)
            if best is None or d < best:
                best = d
    return best


def min_hr_dist_csv(text: str) -> float | None:
    """Recompute the closest approach directly from an exported trace CSV.

    Uses the robot and human position columns, not the stored per-step
    minimum, so it can cross-check the in-memory computation.
    """
    best = None
    for line in text.splitlines()[1:]:
        cols = line.split(",")
        rx, ry = float(cols[1]), float(cols[2])
        packed = cols[11]
        if not packed:
            continue
        for item in packed.split(";"):
            _, hx, hy, _ = item.split(":")
            d = math.hypot(float(hx) - rx, float(hy) - ry)
            if best is None or d < best:
                best = d
    return best


def evaluate(trace: RunTrace) -> MetricsRow:
    return MetricsRow(
        scenario=trace.scenario,
        seed=trace.seed,
        completed=trace.completed,
        collision=trace.collisions(),
        path_length=path_length(trace),
        total_time=total_time(trace),
        min_hr_dist=min_hr_dist(trace),
    )


@dataclass
class BatchSummary:
    """Aggregate of repeated runs of one scenario."""

    scenario: str
    rows: list
    completed: int
    failures: int

    def _completed_values(self, attr: str) -> list:
        return [
            getattr(r, attr)
            for r in self.rows
            if r.completed and getattr(r, attr) is not None
        ]

    def mean(self, attr: str) -> float | None:
        vals = self._completed_values(attr)
        return statistics.fmean(vals) if vals else None

    def std(self, attr: str) -> float | None:
        vals = self._completed_values(attr)
        if not vals:
            return None
        return statistics.pstdev(vals) if len(vals) > 1 else 0.0


def _run_one(args) -> MetricsRow:
    spec, seed = args
    return evaluate(run_scenario(spec, seed=seed))


def run_batch(
    spec: ScenarioSpec,
    repetitions: int = 10,
    seeds=None,
    workers: int = 1,
) -> BatchSummary:
    """Run the scenario ``repetitions`` times and aggregate the metrics.

    Means and deviations cover completed runs only; failed runs show up in
    the failure count instead of skewing the averages.
    """
    if seeds is None:
        seeds = list(range(repetitions))
    jobs = [(spec, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    done = sum(r.completed for r in rows)
    return BatchSummary(
        scenario=spec.name,
        rows=rows,
        completed=done,
        failures=len(rows) - done,
    )


def rows_to_csv(rows) -> str:
    """Per-run metrics in the stable benchmark CSV schema."""
    lines = [CSV_HEADER]
    for r in rows:
        hr = "" if r.min_hr_dist is None else f"{r.min_hr_dist:.4f}"
        lines.append(
            f"{r.scenario},{r.seed},{int(r.completed)},{int(r.collision)},"
            f"{r.path_length:.4f},{r.total_time:.4f},{hr}"
        )
    return "\n".join(lines) + "\n"


def markdown_table(summaries) -> str:
    """Aligned Markdown summary, one row per scenario.

    Column order follows the metric definitions: path length, time, minimum
    human-robot distance; scenarios with zero completions show "-".
    """
    header = (
        "scenario",
        "path_length_m",
        "total_time_s",
        "min_hr_dist_m",
        "completed",
    )
    body = []
    for s in summaries:
        cells = [s.scenario]
        for attr in ("path_length", "total_time", "min_hr_dist"):
            m = s.mean(attr)
            cells.append("-" if m is None else f"{m:.4f}")
        cells.append(f"{s.completed}/{len(s.rows)}")
        body.append(cells)
    widths = [
        max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
        for i in range(len(header))
    ]
    def fmt(cells):
        return "| " + " | ".join(c.ljust(widths[i]) for i, c in enumerate(cells)) + " |"
    lines = [fmt(list(header))]
    lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    lines.extend(fmt(row) for row in body)
    return "\n".join(lines) + "\n"
