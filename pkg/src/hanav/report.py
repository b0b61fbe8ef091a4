"""Figure rendering for recorded runs.

Two figures per run: the trajectory over the map (robot path colored by
time, human paths, mode-change marks) and the velocity/distance profile
(robot speed against the closest human distance on a shared time axis).
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .costmap import OccupancyGrid
from .simulator import RunTrace


def _extent(grid: OccupancyGrid):
    x0, y0 = grid.origin.x, grid.origin.y
    return (
        x0,
        x0 + grid.width * grid.resolution,
        y0,
        y0 + grid.height * grid.resolution,
    )


def render_trajectory(trace: RunTrace, grid: OccupancyGrid, path: Path) -> None:
    """Map view: robot path colored by sim time, human paths in grey."""
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.imshow(
        grid.occupied,
        origin="lower",
        extent=_extent(grid),
        cmap="Greys",
        interpolation="nearest",
    )
    t = np.array([s.t for s in trace.steps])
    rx = np.array([s.robot.x for s in trace.steps])
    ry = np.array([s.robot.y for s in trace.steps])
    sc = ax.scatter(rx, ry, c=t, s=6, cmap="viridis", label="robot")
    fig.colorbar(sc, ax=ax, label="time [s]")
    by_id: dict = {}
    for s in trace.steps:
        for hid, p in s.humans:
            by_id.setdefault(hid, []).append((p.x, p.y))
    for hid, pts in sorted(by_id.items()):
        arr = np.array(pts)
        ax.plot(arr[:, 0], arr[:, 1], color="0.45", lw=1.2)
        ax.annotate(hid, arr[0], fontsize=8, color="0.3")
    last_mode = None
    for s in trace.steps:
        if s.mode != last_mode:
            if last_mode is not None:
                ax.plot(s.robot.x, s.robot.y, "x", color="crimson", ms=7)
                ax.annotate(
                    s.mode, (s.robot.x, s.robot.y), fontsize=7,
                    color="crimson", xytext=(4, 4), textcoords="offset points",
                )
            last_mode = s.mode
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{trace.scenario} seed {trace.seed}")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_profile(trace: RunTrace, path: Path) -> None:
    """Time series: commanded robot speed and closest human distance."""
    t = np.array([s.t for s in trace.steps])
    v = np.array([abs(s.cmd.linear_x) for s in trace.steps])
    d = np.array(
        [s.min_hr_dist if math.isfinite(s.min_hr_dist) else np.nan
         for s in trace.steps]
    )
    fig, ax_v = plt.subplots(figsize=(8, 4))
    ax_v.plot(t, v, color="tab:blue", label="robot speed")
    ax_v.set_xlabel("time [s]")
    ax_v.set_ylabel("speed [m/s]", color="tab:blue")
    ax_v.tick_params(axis="y", labelcolor="tab:blue")
    if np.any(np.isfinite(d)):
        ax_d = ax_v.twinx()
        ax_d.plot(t, d, color="tab:orange", label="min human distance")
        ax_d.set_ylabel("distance [m]", color="tab:orange")
        ax_d.tick_params(axis="y", labelcolor="tab:orange")
        ax_d.set_ylim(bottom=0.0)
    ax_v.set_title(f"{trace.scenario} seed {trace.seed}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_run_report(trace: RunTrace, grid: OccupancyGrid, stem: Path) -> list:
    """Write both figures next to a trace export; returns the file paths."""
    stem = Path(stem)
    traj = stem.with_name(stem.name + "_trajectory.png")
    prof = stem.with_name(stem.name + "_profile.png")
    render_trajectory(trace, grid, traj)
    render_profile(trace, prof)
    return [traj, prof]
