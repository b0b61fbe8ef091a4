import math
import random

import numpy as np
import pytest

from hanav.core import AgentKind, AgentState, Pose2D, Twist2D
from hanav.costmap import CostGrid, OccupancyGrid
from hanav.global_planner import InvalidEndpoint
from hanav.prediction import (
    GoalSet,
    predict_behind,
    predict_external,
    predict_goal,
    predict_goal_update,
    predict_vel_obs,
)


def free_grid(w=100, h=100, res=0.1):
    return CostGrid(OccupancyGrid(res, Pose2D(0, 0, 0), np.zeros((h, w), bool)))


def human_at(x, y, theta=0.0, vx=0.0, vy=0.0):
    return AgentState(
        "h1", AgentKind.HUMAN, Pose2D(x, y, theta), Twist2D(vx, vy)
    )


class TestPredictBehind:
    def test_goal_one_meter_behind_entry_pose(self):
        grid = free_grid()
        plan = predict_behind(Pose2D(5.0, 5.0, 0.0), human_at(8.0, 5.0), grid)
        assert plan.goal.x == pytest.approx(4.0)
        assert plan.goal.y == pytest.approx(5.0)

    def test_goal_respects_entry_heading(self):
        grid = free_grid()
        entry = Pose2D(5.0, 5.0, math.pi / 2)
        plan = predict_behind(entry, human_at(5.0, 8.0), grid)
        assert plan.goal.x == pytest.approx(5.0)
        assert plan.goal.y == pytest.approx(4.0)

    def test_walk_speed_sets_arrival_time(self):
        grid = free_grid()
        plan = predict_behind(Pose2D(5.0, 5.0, 0.0), human_at(8.0, 5.0), grid)
        # straight 4 m walk at 1.2 m/s
        assert plan.waypoints[-1][1] == pytest.approx(4.0 / 1.2, rel=0.05)

    def test_waypoint_times_strictly_increasing(self):
        grid = free_grid()
        plan = predict_behind(Pose2D(2.0, 2.0, 0.7), human_at(7.0, 6.0), grid)
        times = [t for _, t in plan.waypoints]
        assert times[0] == 0.0
        assert all(b > a for a, b in zip(times, times[1:]))


class TestGoalSet:
    def test_uniform(self):
        gs = GoalSet.uniform([Pose2D(0, 0), Pose2D(1, 1)])
        assert np.allclose(gs.posterior, [0.5, 0.5])

    def test_rejects_bad_posterior(self):
        with pytest.raises(ValueError):
            GoalSet([Pose2D(0, 0), Pose2D(1, 1)], [0.7, 0.7])
        with pytest.raises(ValueError):
            GoalSet([Pose2D(0, 0)], [0.5, 0.5])
        with pytest.raises(ValueError):
            GoalSet([Pose2D(0, 0), Pose2D(1, 1)], [1.5, -0.5])


class TestGoalUpdate:
    GOALS = [Pose2D(10.0, 5.0), Pose2D(0.0, 5.0)]  # east vs west

    def test_single_step_closed_form(self):
        # step straight toward goal 0 and away from goal 1: the likelihood
        # ratio is exp(2*1)/exp(2*(-1)), so p0 = 1/(1 + exp(-4))
        gs = GoalSet.uniform(self.GOALS)
        track = [Pose2D(5.0, 5.0), Pose2D(5.1, 5.0)]
        out = predict_goal_update(track, gs)
        assert out.posterior[0] == pytest.approx(1.0 / (1.0 + math.exp(-4.0)), abs=1e-12)

    def test_repeated_steps_compound(self):
        gs = GoalSet.uniform(self.GOALS)
        track = [Pose2D(5.0 + 0.1 * k, 5.0) for k in range(4)]
        for k in range(1, 4):
            gs = predict_goal_update(track[: k + 1], gs)
        assert gs.posterior[0] == pytest.approx(1.0 / (1.0 + math.exp(-12.0)), abs=1e-12)

    def test_stationary_step_is_no_evidence(self):
        gs = GoalSet([Pose2D(10, 5), Pose2D(0, 5)], [0.3, 0.7])
        out = predict_goal_update([Pose2D(5, 5), Pose2D(5, 5)], gs)
        assert np.allclose(out.posterior, [0.3, 0.7])

    def test_candidate_at_current_position_is_neutral(self):
        goals = [Pose2D(5.0, 5.0), Pose2D(5.1, 5.0)]
        gs = GoalSet.uniform(goals)
        out = predict_goal_update([Pose2D(5.0, 5.0), Pose2D(5.1, 5.0)], gs)
        # both goals see cos = 1, so the posterior stays uniform
        assert np.allclose(out.posterior, [0.5, 0.5])

    def test_posterior_stays_valid_random_walks(self):
        rng = random.Random(17)
        goals = [Pose2D(rng.uniform(0, 10), rng.uniform(0, 10)) for _ in range(5)]
        for _ in range(50):
            gs = GoalSet.uniform(goals)
            track = [Pose2D(rng.uniform(0, 10), rng.uniform(0, 10))]
            for _ in range(10):
                prev = track[-1]
                track.append(
                    Pose2D(
                        prev.x + rng.uniform(-0.3, 0.3),
                        prev.y + rng.uniform(-0.3, 0.3),
                    )
                )
                gs = predict_goal_update(track, gs)
                assert np.all(gs.posterior >= 0.0)
                assert gs.posterior.sum() == pytest.approx(1.0, abs=1e-9)

    def test_consistent_motion_concentrates_on_true_goal(self):
        rng = random.Random(23)
        goals = [
            Pose2D(9.0, 9.0), Pose2D(1.0, 9.0), Pose2D(9.0, 1.0), Pose2D(1.0, 1.0)
        ]
        for target in range(4):
            gs = GoalSet.uniform(goals)
            pos = Pose2D(5.0, 5.0)
            track = [pos]
            g = goals[target]
            for _ in range(12):
                d = math.hypot(g.x - pos.x, g.y - pos.y)
                step = min(0.2, d)
                pos = Pose2D(
                    pos.x + step * (g.x - pos.x) / d,
                    pos.y + step * (g.y - pos.y) / d,
                )
                track.append(pos)
                gs = predict_goal_update(track, gs)
            assert int(np.argmax(gs.posterior)) == target
            assert gs.posterior[target] > 0.95

    def test_requires_two_track_points(self):
        with pytest.raises(ValueError):
            predict_goal_update([Pose2D(0, 0)], GoalSet.uniform([Pose2D(1, 1)]))


class TestPredictGoal:
    def test_plans_to_argmax_goal(self):
        grid = free_grid()
        gs = GoalSet([Pose2D(9.0, 5.0), Pose2D(1.0, 5.0)], [0.9, 0.1])
        plan = predict_goal([Pose2D(5.0, 5.0)], gs, grid)
        assert plan.goal.x == pytest.approx(9.0)
        assert plan.confidence == pytest.approx(0.9)

    def test_tie_breaks_to_nearest(self):
        grid = free_grid()
        gs = GoalSet.uniform([Pose2D(9.0, 5.0), Pose2D(4.0, 5.0)])
        plan = predict_goal([Pose2D(5.0, 5.0)], gs, grid)
        assert plan.goal.x == pytest.approx(4.0)


class TestPredictVelObs:
    def test_exact_constant_velocity_samples(self):
        plan = predict_vel_obs(human_at(2.0, 3.0, vx=0.4, vy=-0.2))
        assert len(plan.waypoints) == 11  # t = 0.0, 0.5, ..., 5.0
        for pose, t in plan.waypoints:
            assert pose.x == pytest.approx(2.0 + 0.4 * t, abs=1e-12)
            assert pose.y == pytest.approx(3.0 - 0.2 * t, abs=1e-12)
        assert plan.waypoints[-1][1] == pytest.approx(5.0)
        assert plan.goal.x == pytest.approx(4.0)

    def test_heading_follows_velocity(self):
        plan = predict_vel_obs(human_at(0.0, 0.0, vx=0.0, vy=0.5))
        assert plan.waypoints[0][0].theta == pytest.approx(math.pi / 2)

    def test_stationary_human_single_waypoint(self):
        plan = predict_vel_obs(human_at(4.0, 4.0))
        assert len(plan.waypoints) == 1
        assert plan.goal.x == pytest.approx(4.0)

    def test_custom_horizon_and_step(self):
        plan = predict_vel_obs(human_at(0, 0, vx=1.0), horizon=2.0, step=1.0)
        assert [t for _, t in plan.waypoints] == [0.0, 1.0, 2.0]

    def test_rejects_nonfinite_velocity(self):
        with pytest.raises(ValueError):
            predict_vel_obs(human_at(0, 0, vx=float("nan")))


class TestPredictExternal:
    def test_plans_to_supplied_goal(self):
        grid = free_grid()
        plan = predict_external(human_at(1.0, 1.0), Pose2D(8.0, 8.0), grid)
        last = plan.waypoints[-1][0]
        assert (last.x, last.y) == pytest.approx((8.0, 8.0))

    def test_rejects_goal_in_obstacle(self):
        occ = np.zeros((100, 100), bool)
        occ[50, 50] = True
        grid = CostGrid(OccupancyGrid(0.1, Pose2D(0, 0, 0), occ))
        with pytest.raises(InvalidEndpoint):
            predict_external(human_at(1.0, 1.0), Pose2D(5.05, 5.05), grid)

    def test_unreachable_goal_falls_back_to_clipped_line(self):
        occ = np.zeros((100, 100), bool)
        occ[:, 50] = True  # full wall at x = 5
        grid = CostGrid(OccupancyGrid(0.1, Pose2D(0, 0, 0), occ))
        plan = predict_external(human_at(2.0, 5.0), Pose2D(8.0, 5.0), grid)
        # the straight-line fallback stops short of the wall
        for pose, _ in plan.waypoints:
            assert pose.x < 5.0


class TestPlanInterpolation:
    def test_pose_at_midpoint_and_clamps(self):
        grid = free_grid()
        plan = predict_external(human_at(1.0, 5.0), Pose2D(5.0, 5.0), grid)
        end_t = plan.waypoints[-1][1]
        mid = plan.pose_at(end_t / 2.0)
        assert 1.0 < mid.x < 5.0
        assert plan.pose_at(-1.0).x == pytest.approx(1.0)
        assert plan.pose_at(end_t + 10.0).x == pytest.approx(5.0)

    def test_pose_at_is_monotone_along_straight_plan(self):
        plan = predict_vel_obs(human_at(0, 0, vx=0.8))
        xs = [plan.pose_at(t).x for t in np.linspace(-0.5, 6.0, 40)]
        assert all(b >= a - 1e-12 for a, b in zip(xs, xs[1:]))
