"""Layered 2D cost field over an occupancy grid.

The combined cost of a cell is the max over all layers, normalized to
[0, 1] with 1.0 lethal. Human safety/visibility layers are stamped only
around static humans and vanish beyond a 3 m cutoff radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .core import AgentState, Pose2D, DEFAULT_ROBOT_RADIUS

LETHAL = 1.0
DEFAULT_CUTOFF_RADIUS = 3.0

LAYER_INFLATION = "inflation"
LAYER_HUMAN_SAFETY = "human_safety"
LAYER_HUMAN_VISIBILITY = "human_visibility"


@dataclass(frozen=True)
class OccupancyGrid:
    """Binary occupancy grid. ``occupied[iy, ix]`` with the origin pose at
    the outer corner of cell (0, 0)."""

    resolution: float
    origin: Pose2D
    occupied: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if self.occupied.ndim != 2 or 0 in self.occupied.shape:
            raise ValueError("grid must be a non-empty 2D array")

    @property
    def height(self) -> int:
        return self.occupied.shape[0]

    @property
    def width(self) -> int:
        return self.occupied.shape[1]

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin.x) / self.resolution))
        iy = int(math.floor((y - self.origin.y) / self.resolution))
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def contains_point(self, x: float, y: float) -> bool:
        return self.in_bounds(*self.world_to_cell(x, y))

    def cell_centers_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrids of cell-center world coordinates, shape (h, w)."""
        xs = self.origin.x + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin.y + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def distance_field(self) -> np.ndarray:
        """Euclidean distance (m) from each cell center to the nearest
        occupied cell."""
        cap = 1e6  # finite so interpolation differences stay well-defined
        if not self.occupied.any():
            return np.full(self.occupied.shape, cap)
        free = ~self.occupied
        dist = ndimage.distance_transform_edt(free) * self.resolution
        return np.minimum(dist, cap)


def parse_map_text(text: str) -> OccupancyGrid:
    """Parse the ASCII map format: ``resolution``/``origin`` header lines,
    then rows of ``.`` (free) and ``#`` (occupied), top row first."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if len(lines) < 3:
        raise ValueError("map file too short")
    try:
        key, val = lines[0].split(maxsplit=1)
        assert key == "resolution"
        resolution = float(val)
        parts = lines[1].split()
        assert parts[0] == "origin" and len(parts) == 4
        origin = Pose2D(float(parts[1]), float(parts[2]), float(parts[3]))
    except (AssertionError, ValueError, IndexError) as exc:
        raise ValueError(f"bad map header: {exc}") from exc
    rows = lines[2:]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged map rows")
    if any(c not in ".#" for r in rows for c in r):
        raise ValueError("map rows may contain only '.' and '#'")
    # top row in the file is the highest y index
    occ = np.array([[c == "#" for c in r] for r in reversed(rows)], dtype=bool)
    return OccupancyGrid(resolution, origin, occ)


def serialize_map_text(grid: OccupancyGrid) -> str:
    header = [
        f"resolution {grid.resolution:g}",
        f"origin {grid.origin.x:g} {grid.origin.y:g} {grid.origin.theta:g}",
    ]
    rows = [
        "".join("#" if v else "." for v in grid.occupied[iy])
        for iy in range(grid.height - 1, -1, -1)
    ]
    return "\n".join(header + rows) + "\n"


def load_map(path) -> OccupancyGrid:
    with open(path, "r", encoding="ascii") as fh:
        return parse_map_text(fh.read())


def save_map(grid: OccupancyGrid, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(serialize_map_text(grid))


@dataclass(frozen=True)
class HumanLayerConfig:
    # visibility is wider and stronger than safety so that, under
    # max-combination, approaching from behind costs more than passing in
    # front at the same radius
    safety_amplitude: float = 0.6
    safety_sigma: float = 0.8
    visibility_amplitude: float = 0.9
    visibility_sigma: float = 1.0
    cutoff_radius: float = DEFAULT_CUTOFF_RADIUS

    def __post_init__(self):
        if self.cutoff_radius <= 0.0:
            raise ValueError("cutoff_radius must be positive")
        if not (0.0 < self.safety_amplitude < 1.0):
            raise ValueError("safety_amplitude must be in (0, 1)")
        if not (0.0 < self.visibility_amplitude < 1.0):
            raise ValueError("visibility_amplitude must be in (0, 1)")


@dataclass(frozen=True)
class CostGrid:
    """Occupancy base plus named cost layers; combined cost = per-cell max,
    with occupied base cells pinned lethal."""

    base: OccupancyGrid
    layers: dict = field(default_factory=dict)  # name -> float array (h, w)

    def layer(self, name: str) -> np.ndarray:
        arr = self.layers.get(name)
        if arr is None:
            return np.zeros(self.base.occupied.shape)
        return arr

    def combined(self) -> np.ndarray:
        cost = np.zeros(self.base.occupied.shape)
        for arr in self.layers.values():
            np.maximum(cost, arr, out=cost)
        cost[self.base.occupied] = LETHAL
        return cost

    def with_layer(self, name: str, arr: np.ndarray) -> CostGrid:
        layers = dict(self.layers)
        layers[name] = arr
        return replace(self, layers=layers)


def cost_at(grid: CostGrid, x: float, y: float) -> float:
    ix, iy = grid.base.world_to_cell(x, y)
    if not grid.base.in_bounds(ix, iy):
        raise ValueError(f"query ({x}, {y}) outside grid bounds")
    return float(grid.combined()[iy, ix])


def _stamp_gaussian(
    grid: CostGrid,
    layer_name: str,
    humans: list[AgentState],
    amplitude: float,
    sigma: float,
    cutoff: float,
    behind_only: bool,
) -> CostGrid:
    base = grid.base
    out = grid.layer(layer_name).copy()
    pad = int(math.ceil(cutoff / base.resolution)) + 1
    for human in humans:
        cx, cy = base.world_to_cell(human.pose.x, human.pose.y)
        x0, x1 = max(0, cx - pad), min(base.width, cx + pad + 1)
        y0, y1 = max(0, cy - pad), min(base.height, cy + pad + 1)
        if x0 >= x1 or y0 >= y1:
            continue  # human entirely off-grid: clip silently
        xs = base.origin.x + (np.arange(x0, x1) + 0.5) * base.resolution
        ys = base.origin.y + (np.arange(y0, y1) + 0.5) * base.resolution
        gx, gy = np.meshgrid(xs, ys)
        dx = gx - human.pose.x
        dy = gy - human.pose.y
        r2 = dx * dx + dy * dy
        cost = amplitude * np.exp(-r2 / (2.0 * sigma * sigma))
        cost[r2 > cutoff * cutoff] = 0.0
        if behind_only:
            hx, hy = human.pose.heading_vector()
            ahead = dx * hx + dy * hy
            # strictly behind; the human's own cell keeps full amplitude
            cost[(ahead >= 0.0) & (r2 > 1e-12)] = 0.0
        np.maximum(out[y0:y1, x0:x1], cost, out=out[y0:y1, x0:x1])
    return grid.with_layer(layer_name, out)


def apply_human_safety_layer(
    grid: CostGrid, humans: list[AgentState], cfg: HumanLayerConfig
) -> CostGrid:
    """Full 2D Gaussian around each (static) human, zero beyond cutoff."""
    return _stamp_gaussian(
        grid,
        LAYER_HUMAN_SAFETY,
        humans,
        cfg.safety_amplitude,
        cfg.safety_sigma,
        cfg.cutoff_radius,
        behind_only=False,
    )


def apply_human_visibility_layer(
    grid: CostGrid, humans: list[AgentState], cfg: HumanLayerConfig
) -> CostGrid:
    """Half Gaussian behind each (static) human; zero in the front
    half-plane and beyond cutoff."""
    return _stamp_gaussian(
        grid,
        LAYER_HUMAN_VISIBILITY,
        humans,
        cfg.visibility_amplitude,
        cfg.visibility_sigma,
        cfg.cutoff_radius,
        behind_only=True,
    )


def inflate_obstacles(
    grid: CostGrid,
    inflation_radius: float,
    decay: float = 5.0,
    inscribed_radius: float = DEFAULT_ROBOT_RADIUS,
) -> CostGrid:
    """Lethal out to the robot's inscribed radius, exponential decay beyond
    that out to ``inflation_radius``."""
    if inflation_radius < inscribed_radius:
        raise ValueError("inflation_radius must be >= inscribed_radius")
    dist = grid.base.distance_field()
    cost = np.zeros_like(dist)
    ring = (dist > inscribed_radius) & (dist <= inflation_radius)
    cost[ring] = 0.95 * np.exp(-decay * (dist[ring] - inscribed_radius))
    cost[dist <= inscribed_radius] = LETHAL
    cost[grid.base.occupied] = LETHAL
    return grid.with_layer(LAYER_INFLATION, cost)


def supercover_cells(x0: int, y0: int, x1: int, y1: int):
    """Every cell touched by the segment between two cell centers,
    including both side cells at exact corner crossings."""
    cells = [(x0, y0)]
    dx, dy = x1 - x0, y1 - y0
    nx, ny = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    px, py = x0, y0
    ix = iy = 0
    while ix < nx or iy < ny:
        decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx
        if decision == 0:
            # corner crossing: include both side cells, then step diagonally
            cells.append((px + sx, py))
            cells.append((px, py + sy))
            px += sx
            py += sy
            ix += 1
            iy += 1
        elif decision < 0:
            px += sx
            ix += 1
        else:
            py += sy
            iy += 1
        cells.append((px, py))
    return cells


def raytrace_clear(grid: OccupancyGrid, start: Pose2D, end: Pose2D) -> bool:
    """True iff no occupied cell lies strictly between the two endpoints'
    cell centers."""
    x0, y0 = grid.world_to_cell(start.x, start.y)
    x1, y1 = grid.world_to_cell(end.x, end.y)
    for ix, iy in ((x0, y0), (x1, y1)):
        if not grid.in_bounds(ix, iy):
            raise ValueError("raytrace endpoint outside grid")
    ends = {(x0, y0), (x1, y1)}
    for cell in supercover_cells(x0, y0, x1, y1):
        if cell in ends:
            continue
        if grid.occupied[cell[1], cell[0]]:
            return False
    return True
