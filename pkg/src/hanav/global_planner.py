"""Grid-based global path planning over the combined cost field.

A* over 8-connected cells with an octile heuristic; edge cost is the
Euclidean step length scaled by (1 + kappa * destination-cell cost), so
soft human-layer cost can out-weigh a longer detour.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .core import Pose2D, normalize_angle
from .costmap import CostGrid, supercover_cells

DEFAULT_KAPPA = 3.0
DEFAULT_LETHAL_THRESHOLD = 0.99
DEFAULT_SHORTCUT_THRESHOLD = 0.3

SQRT2 = math.sqrt(2.0)
_STEPS = [
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
]


class PlanningError(Exception):
    pass


class NoPath(PlanningError):
    pass


class InvalidEndpoint(PlanningError):
    pass


@dataclass(frozen=True)
class GlobalPath:
    waypoints: list  # list[Pose2D]
    total_cost: float

    def length(self) -> float:
        return sum(
            math.hypot(b.x - a.x, b.y - a.y)
            for a, b in zip(self.waypoints, self.waypoints[1:])
        )


def _octile(ax: int, ay: int, bx: int, by: int) -> float:
    dx, dy = abs(ax - bx), abs(ay - by)
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def astar_cells(
    cost: np.ndarray,
    start: tuple[int, int],
    goal: tuple[int, int],
    lethal_threshold: float,
    kappa: float,
) -> tuple[list[tuple[int, int]], float]:
    """A* over cell indices (ix, iy). Returns (cell path, path cost in cell
    units). Raises NoPath when the goal is unreachable."""
    h, w = cost.shape
    sx, sy = start
    gx, gy = goal
    dist = {start: 0.0}
    came: dict = {start: None}
    open_heap = [(_octile(sx, sy, gx, gy), 0.0, start)]
    closed = set()
    while open_heap:
        _, d, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while came[path[-1]] is not None:
                path.append(came[path[-1]])
            path.reverse()
            return path, d
        closed.add(cell)
        cx, cy = cell
        for dx, dy, step in _STEPS:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < w and 0 <= ny < h):
                continue
            c = cost[ny, nx]
            if c >= lethal_threshold:
                continue
            nd = d + step * (1.0 + kappa * c)
            nb = (nx, ny)
            if nd < dist.get(nb, math.inf):
                dist[nb] = nd
                came[nb] = cell
                heapq.heappush(open_heap, (nd + _octile(nx, ny, gx, gy), nd, nb))
    raise NoPath(f"goal cell {goal} unreachable from {start}")


def _shortcut(
    cells: list[tuple[int, int]], cost: np.ndarray, soft_threshold: float
) -> list[tuple[int, int]]:
    """Greedy line-of-sight shortcutting over low-cost cells only."""

    def clear(a, b):
        for ix, iy in supercover_cells(a[0], a[1], b[0], b[1]):
            if cost[iy, ix] >= soft_threshold:
                return False
        return True

    out = [cells[0]]
    i = 0
    while i < len(cells) - 1:
        j = len(cells) - 1
        while j > i + 1 and not clear(cells[i], cells[j]):
            j -= 1
        out.append(cells[j])
        i = j
    return out


def plan_path(
    grid: CostGrid,
    start: Pose2D,
    goal: Pose2D,
    lethal_threshold: float = DEFAULT_LETHAL_THRESHOLD,
    kappa: float = DEFAULT_KAPPA,
    smooth: bool = True,
    combined: np.ndarray | None = None,
) -> GlobalPath:
    """Plan a minimum-cost path on the combined cost field.

    ``combined`` lets a caller reuse a precomputed combined-cost array for
    repeated planning on the same grid snapshot.
    """
    base = grid.base
    cost = grid.combined() if combined is None else combined
    start_cell = base.world_to_cell(start.x, start.y)
    goal_cell = base.world_to_cell(goal.x, goal.y)
    for name, (ix, iy) in (("start", start_cell), ("goal", goal_cell)):
        if not base.in_bounds(ix, iy):
            raise InvalidEndpoint(f"{name} outside grid")
        if cost[iy, ix] >= lethal_threshold:
            raise InvalidEndpoint(f"{name} on lethal cell")
    cells, cell_cost = astar_cells(cost, start_cell, goal_cell, lethal_threshold, kappa)
    if smooth and len(cells) > 2:
        cells = _shortcut(cells, cost, DEFAULT_SHORTCUT_THRESHOLD)
    pts = [base.cell_center(ix, iy) for ix, iy in cells]
    pts[0] = (start.x, start.y)
    pts[-1] = (goal.x, goal.y)
    waypoints = []
    for i, (x, y) in enumerate(pts):
        if i < len(pts) - 1:
            nx, ny = pts[i + 1]
            theta = math.atan2(ny - y, nx - x) if (nx, ny) != (x, y) else start.theta
        else:
            theta = goal.theta
        waypoints.append(Pose2D(x, y, normalize_angle(theta)))
    return GlobalPath(waypoints=waypoints, total_cost=cell_cost * base.resolution)
