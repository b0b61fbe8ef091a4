"""Damped Gauss-Newton (Levenberg-Marquardt) optimization of a BandSet."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .band import (
    BandSet,
    ConstraintWeights,
    HUMAN_LIMITS,
    KinodynamicLimits,
    TimedBand,
    resize_band,
)
from .costmap import CostGrid
from .residuals import (
    AccelGroup,
    BandTarget,
    BandVars,
    CLEARANCE_MARGIN,
    FieldInterpolator,
    FixedTarget,
    NonholoGroup,
    ObstacleGroup,
    RelVelGroup,
    SafetyGroup,
    TimeGroup,
    VelocityGroup,
    ViaGroup,
    VisibilityGroup,
)
from .band import OptimizationReport

DEFAULT_OUTER_LOOPS = 4
D_SAFE = 0.6  # m of footprint-to-footprint clearance kept from humans
VIS_AMPLITUDE = 0.9
VIS_SIGMA = 1.0
VIS_CUTOFF = 3.0


@dataclass
class OptimizationContext:
    """Everything the optimizer needs besides the bands themselves."""

    limits: KinodynamicLimits = field(default_factory=KinodynamicLimits)
    human_limits: KinodynamicLimits = HUMAN_LIMITS
    robot_radius: float = 0.35
    v_start: float = 0.0  # current robot speed, anchors the first accel residual
    via_points: np.ndarray | None = None  # (m, 2) sampled from the global path
    fixed_humans: list = field(default_factory=list)  # (AgentState, PredictedPlan|None)
    d_safe: float = D_SAFE


def _distance_interpolator(grid: CostGrid) -> FieldInterpolator:
    base = grid.base
    return FieldInterpolator(
        base.distance_field(), base.origin.x, base.origin.y, base.resolution
    )


def _assign_via_points(band: TimedBand, via: np.ndarray) -> np.ndarray:
    """Nearest interior band pose for each via point."""
    interior = band.poses[1:-1, :2]
    if len(interior) == 0:
        return np.zeros(0, dtype=int)
    d = np.linalg.norm(via[:, None, :] - interior[None, :, :], axis=2)
    return np.argmin(d, axis=1) + 1


def build_problem(
    bands: BandSet,
    interp: FieldInterpolator,
    weights: ConstraintWeights,
    ctx: OptimizationContext,
):
    """Assemble BandVars and residual groups for the current band layout."""
    vars_list = []
    offset = 0
    bv_r = BandVars(bands.robot_band, offset)
    vars_list.append(bv_r)
    offset += bv_r.ncols
    human_bvs = []
    for hb in bands.human_bands:
        # human schedules are fixed: the plan may bend a human's path but
        # must not assume the human slows down or speeds up for the robot
        bv = BandVars(hb, offset, fix_dt=True)
        vars_list.append(bv)
        human_bvs.append(bv)
        offset += bv.ncols

    groups = []

    def add(group, weight, name=None):
        if weight > 0.0 and group.size() > 0:
            group.weight = weight
            if name is not None:
                group.name = name
            groups.append(group)

    add(TimeGroup(bv_r, 1.0), weights.w_time)
    add(VelocityGroup(bv_r, ctx.limits, 1.0), weights.w_kinodynamic)
    add(
        AccelGroup(bv_r, ctx.limits, 1.0, v_start=ctx.v_start, v_end=0.0),
        weights.w_kinodynamic,
    )
    if ctx.limits.nonholonomic:
        add(NonholoGroup(bv_r, 1.0), weights.w_kinodynamic)
    add(
        ObstacleGroup(bv_r, interp, ctx.robot_radius + CLEARANCE_MARGIN, 1.0),
        weights.w_obstacle,
    )
    if ctx.via_points is not None and len(ctx.via_points) > 0:
        via = np.asarray(ctx.via_points, dtype=float).reshape(-1, 2)
        add(ViaGroup(bv_r, via, _assign_via_points(bands.robot_band, via), 1.0),
            weights.w_viapoint)

    robot_times = bands.robot_band.timestamps()[1:-1]
    targets = []
    for bv in human_bvs:
        targets.append((BandTarget(bv).freeze(robot_times), bv))
        plan = bands.human_plans.get(bv.band.agent_id)
        add(VelocityGroup(bv, ctx.human_limits, 1.0), weights.w_human_kinodynamic,
            name="human_kinodynamic")
        add(
            AccelGroup(bv, ctx.human_limits, 1.0, v_start=0.0, v_end=0.0),
            weights.w_human_kinodynamic,
            name="human_kinodynamic",
        )
        if ctx.human_limits.nonholonomic:
            add(NonholoGroup(bv, 1.0), weights.w_human_kinodynamic,
                name="human_kinodynamic")
        add(ObstacleGroup(bv, interp, 0.3 + CLEARANCE_MARGIN, 1.0), weights.w_obstacle)
        if plan is not None:
            via = np.array([[p.x, p.y] for p, _ in plan.waypoints])
            # human bands stick to their predicted path much harder than
            # the robot sticks to its plan: the robot must not count on
            # the human yielding, so the avoidance falls on the robot
            add(ViaGroup(bv, via, _assign_via_points(bv.band, via), 1.0),
                5.0 * weights.w_viapoint)
    for state, plan in ctx.fixed_humans:
        if plan is not None and len(plan.waypoints) > 1:
            targets.append((FixedTarget.from_plan(plan), None))
        else:
            targets.append((FixedTarget.from_state(state), None))

    radius_by_id = {s.id: s.radius for s, _ in ctx.fixed_humans}
    for target, _bv in targets:
        r_h = radius_by_id.get(target.human_id, 0.3)
        d_safe_eff = ctx.d_safe + ctx.robot_radius + r_h
        add(SafetyGroup(bv_r, target, d_safe_eff, 1.0), weights.w_safety)
        add(
            VisibilityGroup(
                bv_r, target, VIS_AMPLITUDE, VIS_SIGMA, VIS_CUTOFF, 1.0
            ),
            weights.w_visibility,
        )
        add(RelVelGroup(bv_r, target, 1.0), weights.w_rel_vel)
    return vars_list, groups


def _eval(groups) -> tuple[np.ndarray, float, dict]:
    parts = []
    breakdown: dict = {}
    for g in groups:
        r = g.residuals()
        parts.append(math.sqrt(g.weight) * r)
        breakdown[g.name] = breakdown.get(g.name, 0.0) + g.weight * float(r @ r)
    rw = np.concatenate(parts) if parts else np.zeros(0)
    return rw, float(rw @ rw), breakdown


def _jacobian(groups, ncols: int) -> np.ndarray:
    m = sum(g.size() for g in groups)
    J = np.zeros((m, ncols))
    row = 0
    for g in groups:
        g.fill_jacobian(J, row)
        J[row : row + g.size()] *= math.sqrt(g.weight)
        row += g.size()
    return J


def _lm_iterations(vars_list, groups, iterations: int):
    """Run LM steps in place; returns (iterations used, converged, nan)."""
    ncols = sum(bv.ncols for bv in vars_list)
    if ncols == 0:
        return 0, True, False

    def get_x():
        return np.concatenate([bv.get() for bv in vars_list])

    def set_x(x):
        for bv in vars_list:
            bv.set(x)

    x = get_x()
    rw, cost, _ = _eval(groups)
    if not np.isfinite(cost):
        return 0, False, True
    lam = 1e-3
    used = 0
    converged = False
    A = g = None  # linearization reused across rejected (cheap) retries
    for _ in range(iterations):
        used += 1
        if A is None:
            J = _jacobian(groups, ncols)
            A = J.T @ J
            g = J.T @ rw
        if float(np.abs(g).max(initial=0.0)) < 1e-9:
            converged = True
            break
        damp = lam * (np.diag(A) + 1e-9)
        try:
            delta = np.linalg.solve(A + np.diag(damp), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        set_x(x + delta)
        rw_new, cost_new, _ = _eval(groups)
        if not np.isfinite(cost_new):
            set_x(x)
            return used, False, True
        if cost_new < cost:
            x = get_x()  # pick up dt clamping / angle normalization
            rw, cost = rw_new, cost_new
            lam = max(lam / 3.0, 1e-9)
            A = g = None
        else:
            set_x(x)
            lam *= 5.0
            if lam > 1e10:
                # damping saturated: no descent direction left
                converged = float(np.abs(g).max()) < 1e-3
                break
    return used, converged or used < iterations, False


def optimize(
    bands: BandSet,
    grid: CostGrid,
    weights: ConstraintWeights,
    budget: int = 40,
    ctx: OptimizationContext | None = None,
    outer_loops: int = DEFAULT_OUTER_LOOPS,
    resize: bool = True,
    interp: FieldInterpolator | None = None,
) -> tuple[BandSet, OptimizationReport]:
    """Locally optimize the band set under the weighted residual model.

    The iteration budget is split across ``outer_loops`` band-resize loops.
    Bands are modified in place; endpoints stay untouched.
    """
    t0 = time.perf_counter()
    ctx = ctx or OptimizationContext()
    if interp is None:
        interp = _distance_interpolator(grid)
    inner = max(1, budget // outer_loops)
    total_used = 0
    converged = True
    nan_abort = False
    for loop in range(outer_loops):
        if resize and loop > 0:
            bands.robot_band = resize_band(bands.robot_band)
            bands.human_bands = [resize_band(b) for b in bands.human_bands]
        vars_list, groups = build_problem(bands, interp, weights, ctx)
        used, ok, nan = _lm_iterations(vars_list, groups, inner)
        total_used += used
        converged = converged and ok
        if nan:
            nan_abort = True
            break
    _, groups = build_problem(bands, interp, weights, ctx)
    rw, cost, breakdown = _eval(groups)
    # A budget-limited solve still counts as healthy when the robot band
    # is feasible: no hard human-clearance or wall violation remains.
    healthy = not nan_abort and _robot_band_feasible(groups, ctx)
    report = OptimizationReport(
        iterations=total_used,
        final_residual_norm=math.sqrt(cost),
        cost_breakdown=breakdown,
        wall_us=(time.perf_counter() - t0) * 1e6,
        converged=(converged or healthy) and not nan_abort,
        nan_abort=nan_abort,
    )
    return bands, report


def _robot_band_feasible(groups, ctx: OptimizationContext) -> bool:
    """True when the robot band keeps hard clearances: outside every
    human's inner margin and never inside a wall."""
    for g in groups:
        if isinstance(g, SafetyGroup) and g.bv.offset == 0:
            _, dist = g._terms()
            if dist.size and float(dist.min()) < 0.6 * g.d_safe:
                return False
        elif isinstance(g, ObstacleGroup) and g.bv.offset == 0:
            p = g.bv.band.poses[1:-1]
            if len(p) == 0:
                continue
            d, _, _ = g.interp.value_grad(p[:, 0], p[:, 1])
            if float(np.min(d)) < ctx.robot_radius:
                return False
    return True
