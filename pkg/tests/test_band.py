import math

import numpy as np
import pytest

from hanav.core import (
    Activity,
    AgentKind,
    AgentState,
    HumanActivity,
    Pose2D,
    Twist2D,
)
from hanav.band import (
    BandSet,
    ConstraintWeights,
    DT_MIN,
    KinodynamicLimits,
    SPACING_MAX,
    SPACING_MIN,
    TimedBand,
    band_from_polyline,
    extract_command,
    initialize_bandset,
    initialize_human_band,
    initialize_robot_band,
    resize_band,
    select_nearest_dynamic_humans,
)
from hanav.global_planner import GlobalPath
from hanav.prediction import PredictedPlan


def robot(x=0.0, y=0.0, theta=0.0):
    return AgentState("robot", AgentKind.ROBOT, Pose2D(x, y, theta), radius=0.35)


def straight_path(x0, y0, x1, y1):
    theta = math.atan2(y1 - y0, x1 - x0)
    return GlobalPath([Pose2D(x0, y0, theta), Pose2D(x1, y1, theta)], 0.0)


class TestTimedBand:
    def test_validation(self):
        with pytest.raises(ValueError):
            TimedBand("r", np.zeros((1, 3)), np.zeros(0))
        with pytest.raises(ValueError):
            TimedBand("r", np.zeros((3, 3)), np.array([0.5]))
        with pytest.raises(ValueError):
            TimedBand("r", np.zeros((2, 3)), np.array([0.001]))

    def test_timestamps_and_duration(self):
        band = TimedBand("r", np.zeros((3, 3)), np.array([0.4, 0.6]))
        assert np.allclose(band.timestamps(), [0.0, 0.4, 1.0])
        assert band.duration() == pytest.approx(1.0)

    def test_pose_at_interpolates_and_clamps(self):
        poses = np.array([[0, 0, 0], [1, 0, 0.4], [2, 0, 0.8]], dtype=float)
        band = TimedBand("r", poses, np.array([1.0, 1.0]))
        assert band.pose_at(-1.0)[0] == 0.0
        assert band.pose_at(0.5)[0] == pytest.approx(0.5)
        assert band.pose_at(0.5)[2] == pytest.approx(0.2)
        assert band.pose_at(5.0)[0] == 2.0

    def test_pose_at_wraps_angles(self):
        poses = np.array([[0, 0, 3.0], [1, 0, -3.0]], dtype=float)
        band = TimedBand("r", poses, np.array([1.0]))
        # shortest way from 3.0 to -3.0 passes through pi
        mid = band.pose_at(0.5)[2]
        assert abs(mid) == pytest.approx(math.pi, abs=1e-9)


class TestInitialization:
    def test_four_meter_path_gives_eleven_poses(self):
        band = initialize_robot_band(
            straight_path(0, 0, 4, 0), robot(), KinodynamicLimits()
        )
        assert band.n == 11

    def test_first_pose_is_robot_state(self):
        band = initialize_robot_band(
            straight_path(0, 0, 4, 0), robot(0.0, 0.0, 0.3), KinodynamicLimits()
        )
        assert band.poses[0][2] == pytest.approx(0.3)

    def test_long_path_truncated_to_horizon(self):
        band = initialize_robot_band(
            straight_path(0, 0, 20, 0), robot(), KinodynamicLimits()
        )
        seg = np.linalg.norm(np.diff(band.poses[:, :2], axis=0), axis=1)
        assert seg.sum() == pytest.approx(5.0, abs=1e-6)

    def test_warm_start_reuses_previous_band(self):
        path = straight_path(0, 0, 4, 0)
        limits = KinodynamicLimits()
        first = initialize_robot_band(path, robot(), limits)
        marker = first.poses[3].copy()
        moved = robot(0.41, 0.02, 0.0)
        second = initialize_robot_band(path, moved, limits, previous=first)
        assert second.n == first.n - 1  # one passed pose dropped
        assert second.poses[0][0] == pytest.approx(0.41)
        assert np.allclose(second.poses[2], marker)

    def test_changed_goal_resamples_fresh(self):
        limits = KinodynamicLimits()
        first = initialize_robot_band(straight_path(0, 0, 4, 0), robot(), limits)
        second = initialize_robot_band(
            straight_path(0, 0, 0, 4), robot(), limits, previous=first
        )
        assert second.poses[-1][1] == pytest.approx(4.0)

    def test_degenerate_single_pose_path(self):
        path = GlobalPath([Pose2D(1.0, 1.0, 0.0)], 0.0)
        band = initialize_robot_band(path, robot(1, 1), KinodynamicLimits())
        assert band.n == 2
        assert band.time_deltas[0] >= DT_MIN

    def test_human_band_from_plan(self):
        wps = [(Pose2D(0.4 * k, 0.0, 0.0), 0.4 * k / 1.2) for k in range(6)]
        plan = PredictedPlan("h1", wps[-1][0], wps)
        human = AgentState("h1", AgentKind.HUMAN, Pose2D(0, 0, 0))
        band = initialize_human_band(plan, human)
        assert band.agent_id == "h1"
        assert band.poses[-1][0] == pytest.approx(2.0)

    def test_bandset_limits_human_bands(self):
        with pytest.raises(ValueError):
            BandSet(
                TimedBand("r", np.zeros((2, 3)), np.array([0.1])),
                human_bands=[
                    TimedBand(f"h{i}", np.zeros((2, 3)), np.array([0.1]))
                    for i in range(3)
                ],
            )

    def test_initialize_bandset_caps_at_two(self):
        plans = []
        humans = {}
        for i in range(3):
            hid = f"h{i}"
            wps = [(Pose2D(1.0 + i, 1.0 + 0.4 * k, 0.0), 0.4 * k) for k in range(4)]
            plans.append(PredictedPlan(hid, wps[-1][0], wps))
            humans[hid] = AgentState(hid, AgentKind.HUMAN, wps[0][0])
        bands = initialize_bandset(
            straight_path(0, 0, 4, 0), plans, robot(), humans, KinodynamicLimits()
        )
        assert len(bands.human_bands) == 2


class TestResize:
    def test_splits_long_segments(self):
        poses = np.array([[0, 0, 0], [1.5, 0, 0], [3.0, 0, 0]], dtype=float)
        band = TimedBand("r", poses, np.array([1.0, 1.0]))
        out = resize_band(band)
        seg = np.linalg.norm(np.diff(out.poses[:, :2], axis=0), axis=1)
        assert np.all(seg <= SPACING_MAX + 1e-9)

    def test_merges_short_segments(self):
        xs = np.concatenate([[0.0], np.full(5, 0.05).cumsum(), [1.0]])
        poses = np.column_stack([xs, np.zeros(len(xs)), np.zeros(len(xs))])
        band = TimedBand("r", poses, np.full(len(xs) - 1, 0.2))
        out = resize_band(band)
        seg = np.linalg.norm(np.diff(out.poses[:, :2], axis=0), axis=1)
        assert np.all(seg[:-1] >= SPACING_MIN - 1e-9)

    def test_preserves_endpoints_and_duration(self):
        poses = np.array([[0, 0, 0], [1.5, 0.4, 0.2], [2.8, 0.1, 0.1]])
        band = TimedBand("r", poses.astype(float), np.array([0.9, 1.1]))
        out = resize_band(band)
        assert np.array_equal(out.poses[0], band.poses[0])
        assert np.array_equal(out.poses[-1], band.poses[-1])
        assert out.duration() == pytest.approx(band.duration(), abs=1e-9)


class TestExtractCommand:
    def test_straight_segment_speed(self):
        poses = np.array([[0, 0, 0], [0.4, 0, 0]], dtype=float)
        band = TimedBand("r", poses, np.array([0.8]))
        cmd = extract_command(band, KinodynamicLimits())
        assert cmd.linear_x == pytest.approx(0.5)
        assert cmd.angular == pytest.approx(0.0)

    def test_collapsed_band_zero_command(self):
        poses = np.array([[1, 1, 0.3], [1, 1, 0.3]], dtype=float)
        band = TimedBand("r", poses, np.array([DT_MIN]))
        cmd = extract_command(band, KinodynamicLimits())
        assert cmd.linear_x == 0.0 and cmd.angular == 0.0

    def test_in_place_rotation(self):
        poses = np.array([[1, 1, 0.0], [1, 1, 0.6]], dtype=float)
        band = TimedBand("r", poses, np.array([1.0]))
        cmd = extract_command(band, KinodynamicLimits())
        assert cmd.linear_x == pytest.approx(0.0, abs=1e-9)
        assert cmd.angular > 0.0

    def test_clipped_to_limits(self):
        poses = np.array([[0, 0, 0], [2.0, 0, 0]], dtype=float)
        band = TimedBand("r", poses, np.array([0.5]))  # 4 m/s
        cmd = extract_command(band, KinodynamicLimits(v_max=0.8))
        assert cmd.linear_x == pytest.approx(0.8)

    def test_reverse_motion_negative_linear(self):
        poses = np.array([[0, 0, 0], [-0.2, 0, 0]], dtype=float)
        band = TimedBand("r", poses, np.array([1.0]))
        cmd = extract_command(band, KinodynamicLimits())
        assert cmd.linear_x < 0.0


class TestSelectNearestDynamicHumans:
    @staticmethod
    def entry(hid, x, y, activity):
        state = AgentState(hid, AgentKind.HUMAN, Pose2D(x, y, 0))
        return state, HumanActivity(activity)

    def test_two_nearest_of_three(self):
        r = robot()
        humans = [
            self.entry("a", 2, 0, Activity.DYNAMIC),
            self.entry("b", 4, 0, Activity.DYNAMIC),
            self.entry("c", 6, 0, Activity.DYNAMIC),
        ]
        got = select_nearest_dynamic_humans(humans, r)
        assert [h.id for h in got] == ["a", "b"]

    def test_static_excluded(self):
        r = robot()
        humans = [self.entry("a", 2, 0, Activity.STATIC)]
        assert select_nearest_dynamic_humans(humans, r) == []

    def test_unknown_counts_as_potentially_moving(self):
        r = robot()
        humans = [self.entry("a", 2, 0, Activity.UNKNOWN)]
        assert [h.id for h in select_nearest_dynamic_humans(humans, r)] == ["a"]

    def test_behind_robot_excluded(self):
        r = robot(0, 0, 0.0)  # facing +x
        humans = [
            self.entry("behind", -2, 0, Activity.DYNAMIC),
            self.entry("ahead", 3, 0, Activity.DYNAMIC),
        ]
        assert [h.id for h in select_nearest_dynamic_humans(humans, r)] == ["ahead"]

    def test_distance_tie_breaks_by_id(self):
        r = robot()
        humans = [
            self.entry("z", 2, 1, Activity.DYNAMIC),
            self.entry("a", 2, -1, Activity.DYNAMIC),
            self.entry("m", 1, 0, Activity.DYNAMIC),
        ]
        got = select_nearest_dynamic_humans(humans, r)
        assert [h.id for h in got] == ["m", "a"]


class TestConstraintWeights:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ConstraintWeights(w_safety=-1.0)

    def test_unsupported_terms_stay_off(self):
        with pytest.raises(NotImplementedError):
            ConstraintWeights(ttc_enabled=True)
        with pytest.raises(NotImplementedError):
            ConstraintWeights(ttcplus_enabled=True)
