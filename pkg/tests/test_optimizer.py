import math

import numpy as np
import pytest

from hanav.core import AgentKind, AgentState, Pose2D, Twist2D
from hanav.costmap import CostGrid, OccupancyGrid
from hanav.band import (
    BandSet,
    ConstraintWeights,
    KinodynamicLimits,
    TimedBand,
    band_from_polyline,
)
from hanav.optimizer import OptimizationContext, build_problem, optimize, \
    _distance_interpolator
from hanav.prediction import PredictedPlan


def free_grid(w=200, h=200, res=0.1):
    return CostGrid(OccupancyGrid(res, Pose2D(0, 0, 0), np.zeros((h, w), bool)))


def straight_band(x0, y0, x1, y1, cruise=0.8):
    pts = np.array([[x0, y0], [x1, y1]])
    theta = math.atan2(y1 - y0, x1 - x0)
    return band_from_polyline("robot", pts, Pose2D(x0, y0, theta), theta, cruise)


def run(bands, grid, weights=None, ctx=None, budget=200, **kw):
    weights = weights or ConstraintWeights()
    ctx = ctx or OptimizationContext()
    return optimize(bands, grid, weights, budget=budget, ctx=ctx, **kw)


def test_straight_line_duration_near_time_optimal():
    # 4 m run from rest to rest: d/v_max + v_max/a_max = 6.0 s
    grid = free_grid()
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.0, cruise=0.4))
    bands, report = run(bands, grid, budget=500)
    assert report.converged
    expected = 4.0 / 0.8 + 0.8 / 0.8
    assert bands.robot_band.duration() == pytest.approx(expected, rel=0.05)


def test_optimization_descends():
    grid = free_grid()
    weights = ConstraintWeights()
    ctx = OptimizationContext()
    interp = _distance_interpolator(grid)

    def total(bands):
        from hanav.optimizer import _eval
        _, groups = build_problem(bands, interp, weights, ctx)
        return _eval(groups)[1]

    bands = BandSet(straight_band(4.0, 10.0, 8.0, 11.0, cruise=0.2))
    before = total(bands)
    bands, report = run(bands, grid, weights, ctx, resize=False)
    assert total(bands) <= before + 1e-9


def test_endpoints_bitwise_fixed():
    grid = free_grid()
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.5))
    first = bands.robot_band.poses[0].copy()
    last = bands.robot_band.poses[-1].copy()
    bands, _ = run(bands, grid)
    assert np.array_equal(bands.robot_band.poses[0], first)
    assert np.array_equal(bands.robot_band.poses[-1], last)


def test_band_pushed_off_obstacle():
    occ = np.zeros((200, 200), bool)
    occ[99:101, 80:120] = True  # wall along y = 10 for x in [8, 12]
    grid = CostGrid(OccupancyGrid(0.1, Pose2D(0, 0, 0), occ))
    # initialization grazes the wall's upper face
    band = straight_band(6.0, 10.18, 14.0, 10.18)
    bands, report = run(BandSet(band), grid, budget=400)
    interp = _distance_interpolator(grid)
    p = bands.robot_band.poses[1:-1]
    d, _, _ = interp.value_grad(p[:, 0], p[:, 1])
    # interior poses end up clear of the wall by most of the footprint margin
    assert float(d.min()) > 0.3


def test_safety_term_keeps_distance_from_human():
    grid = free_grid()
    human = AgentState("h1", AgentKind.HUMAN, Pose2D(6.0, 9.9), Twist2D())
    ctx = OptimizationContext(fixed_humans=[(human, None)])
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.0))
    bands, _ = run(bands, grid, ctx=ctx, budget=400)
    p = bands.robot_band.poses[1:-1, :2]
    d = np.linalg.norm(p - [6.0, 9.9], axis=1)
    mid = d[np.abs(p[:, 0] - 6.0) < 0.5]
    # effective clearance: d_safe + robot radius + human radius = 1.25
    assert mid.size and float(mid.min()) > 0.8


def test_breakdown_sums_to_total_cost():
    grid = free_grid()
    human = AgentState("h1", AgentKind.HUMAN, Pose2D(6.5, 10.2), Twist2D(0.3, 0.0))
    ctx = OptimizationContext(fixed_humans=[(human, None)])
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.0))
    bands, report = run(bands, grid, ctx=ctx)
    assert report.total_cost() == pytest.approx(
        report.final_residual_norm**2, rel=1e-9
    )


def test_zero_weight_disables_group():
    grid = free_grid()
    human = AgentState("h1", AgentKind.HUMAN, Pose2D(6.0, 10.3), Twist2D())
    ctx = OptimizationContext(fixed_humans=[(human, None)])
    weights = ConstraintWeights(w_safety=0.0, w_visibility=0.0, w_rel_vel=0.0)
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.0))
    bands, report = run(bands, grid, weights, ctx)
    for name in ("safety", "visibility", "rel_vel"):
        assert name not in report.cost_breakdown


def test_human_band_groups_named_separately():
    grid = free_grid()
    wps = [(Pose2D(6.0 + 0.4 * k, 11.0, 0.0), 0.4 * k / 1.2) for k in range(8)]
    plan = PredictedPlan("h1", wps[-1][0], wps)
    human = AgentState("h1", AgentKind.HUMAN, Pose2D(6.0, 11.0), Twist2D(1.0, 0.0))
    from hanav.band import initialize_human_band
    hband = initialize_human_band(plan, human)
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.0), [hband], {"h1": plan})
    bands, report = run(bands, grid)
    assert "human_kinodynamic" in report.cost_breakdown
    assert "kinodynamic" in report.cost_breakdown


def test_human_band_endpoints_fixed_too():
    grid = free_grid()
    wps = [(Pose2D(6.0 + 0.4 * k, 10.8, 0.0), 0.4 * k / 1.2) for k in range(8)]
    plan = PredictedPlan("h1", wps[-1][0], wps)
    human = AgentState("h1", AgentKind.HUMAN, Pose2D(6.0, 10.8), Twist2D(1.0, 0.0))
    from hanav.band import initialize_human_band
    hband = initialize_human_band(plan, human)
    first = hband.poses[0].copy()
    last = hband.poses[-1].copy()
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.0), [hband], {"h1": plan})
    bands, _ = run(bands, grid)
    assert np.array_equal(bands.human_bands[0].poses[0], first)
    assert np.array_equal(bands.human_bands[0].poses[-1], last)


def test_report_counts_iterations_and_wall_time():
    grid = free_grid()
    bands = BandSet(straight_band(4.0, 10.0, 8.0, 10.0, cruise=0.2))
    bands, report = run(bands, grid, budget=40)
    assert 0 < report.iterations <= 40
    assert report.wall_us > 0.0
    assert not report.nan_abort
