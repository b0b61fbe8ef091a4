"""Situation assessment and planning-mode control.

Tracks per-human activity, filters humans by visibility and planning
radius, shifts between the four control-level planning modes, and runs
the backoff-recovery behavior (reverse, side-step, wait, resume).
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Activity,
    AgentState,
    CLASSIFY_WINDOW,
    HumanActivity,
    Pose2D,
    Twist2D,
    classify_activity,
    euclidean_distance,
    normalize_angle,
)
from .costmap import OccupancyGrid, raytrace_clear
from .prediction import PredictionMethod
from .residuals import FieldInterpolator

UNSEEN_GRACE = 3.0  # s a waiting robot keeps assuming an occluded human


class PlanningMode(enum.Enum):
    SINGLE_BAND = "SingleBand"
    DUAL_BAND = "DualBand"
    VEL_OBS = "VelObs"
    BACKOFF = "BackoffRecovery"


class BackoffPhase(enum.Enum):
    REVERSING = "Reversing"
    SIDE_STEPPING = "SideStepping"
    WAITING = "Waiting"
    RESUMING = "Resuming"


@dataclass(frozen=True)
class TransitionParams:
    planning_radius: float = 10.0
    backoff_distance: float = 2.5
    stuck_timeout: float = 10.0
    wait_timeout: float = 30.0
    progress_epsilon: float = 0.05
    progress_window: float = 2.0
    backoff_speed: float = 0.2
    side_margin: float = 0.1
    n_crowd: int = 4
    nonconvergence_streak: int = 3
    health_timeout: float = 5.0
    fov: float | None = None  # angular field of view (rad), None = 360 deg

    def __post_init__(self):
        for name in (
            "planning_radius", "backoff_distance", "stuck_timeout",
            "wait_timeout", "progress_epsilon", "progress_window",
            "backoff_speed",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.backoff_distance >= self.planning_radius:
            raise ValueError("backoff_distance must be < planning_radius")


@dataclass
class SituationSnapshot:
    t: float
    visible_humans: list  # list[(AgentState, HumanActivity, distance)]
    mode: PlanningMode
    time_in_mode: float
    stuck_duration: float  # seconds without progress toward the goal
    nearest_dist: float  # inf when no humans visible

    def dynamic_humans(self):
        """Humans eligible for bands: moving or not yet classifiable."""
        return [
            (s, a, d) for s, a, d in self.visible_humans
            if a.value != Activity.STATIC
        ]

    def static_humans(self):
        return [
            (s, a, d) for s, a, d in self.visible_humans
            if a.value == Activity.STATIC
        ]


@dataclass(frozen=True)
class ModeChange:
    """Side effects a mode switch implies for the planning pipeline."""

    drop_all_human_bands: bool
    bands_require_velocity: bool
    prediction: PredictionMethod
    apply_static_layers: bool


def _prediction_for(mode: PlanningMode, default: PredictionMethod) -> PredictionMethod:
    if mode == PlanningMode.VEL_OBS:
        return PredictionMethod.VEL_OBS
    return default


class ModeController:
    """Owns all cross-cycle mode state for one robot."""

    def __init__(
        self,
        goal: Pose2D,
        params: TransitionParams | None = None,
        prediction: PredictionMethod = PredictionMethod.BEHIND,
        mode_lock: PlanningMode | None = None,
    ):
        if mode_lock == PlanningMode.BACKOFF:
            raise ValueError("planning cannot be locked to BackoffRecovery")
        self.goal = goal
        self.params = params or TransitionParams()
        self.default_prediction = prediction
        self.mode_lock = mode_lock
        self.mode = mode_lock or PlanningMode.SINGLE_BAND
        self.mode_since = 0.0
        self.transition_log: list = []
        self._speed_histories: dict = {}
        self._activity_since: dict = {}
        self._entry_poses: dict = {}  # id -> robot pose when human became visible
        self._best_goal_dist = math.inf
        self._last_progress_t = 0.0
        self._nonconv_streak = 0
        self._healthy_since: float | None = None
        self._breadcrumbs: deque = deque(maxlen=400)
        self._backoff: _BackoffState | None = None
        self._df_cache: tuple | None = None

    # -- situation assessment ------------------------------------------------

    def set_goal(self, goal: Pose2D, t: float) -> None:
        self.goal = goal
        self._best_goal_dist = math.inf
        self._last_progress_t = t
        if self.mode == PlanningMode.BACKOFF:
            # new goals are accepted while waiting; recovery ends here
            self._transition(PlanningMode.SINGLE_BAND, t, "new_goal")
            self._backoff = None

    def assess(
        self,
        robot: AgentState,
        humans: list,
        grid: OccupancyGrid,
        t: float,
    ) -> SituationSnapshot:
        """Filter humans by radius/visibility and refresh activity and
        progress tracking. Call once per control cycle."""
        visible = []
        seen = set()
        for human in humans:
            hist = self._speed_histories.setdefault(
                human.id, deque(maxlen=CLASSIFY_WINDOW)
            )
            hist.append(human.velocity.speed())
            dist = euclidean_distance(robot.pose, human.pose)
            if dist > self.params.planning_radius:
                self._entry_poses.pop(human.id, None)
                continue
            if self.params.fov is not None:
                bearing = math.atan2(
                    human.pose.y - robot.pose.y, human.pose.x - robot.pose.x
                )
                if abs(normalize_angle(bearing - robot.pose.theta)) > self.params.fov / 2:
                    continue
            if not raytrace_clear(grid, robot.pose, human.pose):
                continue
            seen.add(human.id)
            self._entry_poses.setdefault(human.id, robot.pose)
            activity = self._classify(human.id, t)
            visible.append((human, activity, dist))
        for hid in list(self._entry_poses):
            if hid not in seen:
                self._entry_poses.pop(hid)
        visible.sort(key=lambda e: (e[2], e[0].id))

        goal_dist = euclidean_distance(robot.pose, self.goal)
        if goal_dist < self._best_goal_dist - self.params.progress_epsilon:
            self._best_goal_dist = goal_dist
            self._last_progress_t = t
        self._breadcrumbs.append(np.array([robot.pose.x, robot.pose.y]))

        nearest = visible[0][2] if visible else math.inf
        return SituationSnapshot(
            t=t,
            visible_humans=visible,
            mode=self.mode,
            time_in_mode=t - self.mode_since,
            stuck_duration=t - self._last_progress_t,
            nearest_dist=nearest,
        )

    def entry_pose(self, human_id: str) -> Pose2D | None:
        """Robot pose recorded when the human entered the visible radius."""
        return self._entry_poses.get(human_id)

    def _classify(self, human_id: str, t: float) -> HumanActivity:
        verdict = classify_activity(list(self._speed_histories[human_id]))
        prev = self._activity_since.get(human_id)
        if prev is None or prev[0] != verdict.value:
            self._activity_since[human_id] = (verdict.value, t)
            return HumanActivity(verdict.value, 0.0)
        return HumanActivity(verdict.value, t - prev[1])

    # -- mode selection ------------------------------------------------------

    def observe_optimizer(self, converged: bool, t: float) -> None:
        if converged:
            self._nonconv_streak = 0
            if self._healthy_since is None:
                self._healthy_since = t
        else:
            self._nonconv_streak += 1
            self._healthy_since = None

    def select_mode(self, snapshot: SituationSnapshot) -> PlanningMode:
        if self.mode_lock is not None:
            return self.mode_lock
        if self.mode == PlanningMode.BACKOFF:
            return self.mode  # backoff exits through its own phase machine
        t = snapshot.t
        p = self.params
        dynamic = snapshot.dynamic_humans()
        if not snapshot.visible_humans:
            self._shift(PlanningMode.SINGLE_BAND, t, "no_visible_humans")
        elif (
            self.mode == PlanningMode.VEL_OBS
            and snapshot.nearest_dist < p.backoff_distance
            and snapshot.stuck_duration > p.stuck_timeout
        ):
            # stuck close to a human regardless of whether they still move:
            # a yielding human that froze face-to-face counts as well
            self._enter_backoff(snapshot)
        elif len(dynamic) >= p.n_crowd:
            self._shift(PlanningMode.VEL_OBS, t, "crowd")
        elif not dynamic:
            # only static humans around: squeeze through on velocity
            # obstacles when close, otherwise costmap layers suffice
            if snapshot.nearest_dist < p.backoff_distance:
                self._shift(PlanningMode.VEL_OBS, t, "static_squeeze")
            else:
                self._shift(PlanningMode.SINGLE_BAND, t, "static_humans_only")
        elif self.mode == PlanningMode.VEL_OBS:
            if (
                self._healthy_since is not None
                and t - self._healthy_since >= p.health_timeout
            ):
                self._shift(PlanningMode.DUAL_BAND, t, "optimizer_recovered")
        else:
            if self._nonconv_streak >= p.nonconvergence_streak:
                self._shift(PlanningMode.VEL_OBS, t, "optimizer_entangled")
            else:
                self._shift(PlanningMode.DUAL_BAND, t, "dynamic_humans")
        return self.mode

    def _shift(self, new: PlanningMode, t: float, reason: str) -> None:
        if new != self.mode:
            self._transition(new, t, reason)

    def _transition(self, new: PlanningMode, t: float, reason: str) -> None:
        old = self.mode
        self.mode = new
        self.mode_since = t
        self.transition_log.append(
            f"t={t:.2f} mode {old.value}->{new.value} reason={reason}"
        )
        if new == PlanningMode.VEL_OBS:
            self._healthy_since = None

    def on_mode_change(self, new: PlanningMode) -> ModeChange:
        return ModeChange(
            drop_all_human_bands=new
            in (PlanningMode.SINGLE_BAND, PlanningMode.BACKOFF),
            bands_require_velocity=new == PlanningMode.VEL_OBS,
            prediction=_prediction_for(new, self.default_prediction),
            apply_static_layers=True,
        )

    # -- backoff recovery ----------------------------------------------------

    def _enter_backoff(self, snapshot: SituationSnapshot) -> None:
        trigger = snapshot.visible_humans[0][0].id if snapshot.visible_humans else None
        self._backoff = _BackoffState(
            phase=BackoffPhase.REVERSING,
            trigger_human=trigger,
            crumbs=[c.copy() for c in self._breadcrumbs],
            # where the stand-off happened: Resuming returns here so the
            # planner restarts from a pose already on the cleared route
            return_point=(
                self._breadcrumbs[-1].copy() if self._breadcrumbs else None
            ),
            last_seen=snapshot.t,
        )
        self._transition(PlanningMode.BACKOFF, snapshot.t, "stuck_near_human")

    @property
    def backoff_phase(self) -> BackoffPhase | None:
        return self._backoff.phase if self._backoff else None

    @property
    def backoff_alarm(self) -> bool:
        return bool(self._backoff and self._backoff.alarm)

    def backoff_step(
        self,
        robot: AgentState,
        snapshot: SituationSnapshot,
        grid: OccupancyGrid,
        t: float,
    ) -> Twist2D:
        """One backoff-recovery control step. On Resuming the controller
        exits to SingleBand and returns a zero command."""
        st = self._backoff
        if st is None or self.mode != PlanningMode.BACKOFF:
            return Twist2D()
        trigger_state = next(
            (s for s, _, _ in snapshot.visible_humans if s.id == st.trigger_human),
            None,
        )
        if st.phase == BackoffPhase.REVERSING:
            if trigger_state is None:
                # the human retreated or left the radius: nothing to yield to
                self._set_phase(BackoffPhase.RESUMING, t, "human_gone")
                return self._resuming_step(robot, grid, t)
            refuge = self._find_refuge(robot, trigger_state, grid)
            if refuge is not None:
                st.refuge = refuge
                # the straight run into the pocket is clear by construction,
                # so Resuming can retrace it from this exact spot
                st.refuge_from = np.array([robot.pose.x, robot.pose.y])
                self._set_phase(BackoffPhase.SIDE_STEPPING, t, "side_clear")
                return self._goto(robot, st.refuge) or Twist2D()
            cmd = self._reverse_along_crumbs(robot, st)
            if cmd is None:
                # hovering in place eats the crumb trail; fall back to
                # plain retreat so a pocket can come back into reach
                cmd = self._reverse_away(robot, trigger_state, grid)
            if cmd is None:
                st.alarm = True  # reverse path blocked: hold and wait
                self._begin_wait(robot, trigger_state, st, t, "reverse_blocked")
                return Twist2D()
            return cmd
        if st.phase == BackoffPhase.SIDE_STEPPING:
            cmd = self._goto(robot, st.refuge)
            if cmd is None:
                self._begin_wait(robot, trigger_state, st, t, "pocket_reached")
                return Twist2D()
            return cmd
        if trigger_state is not None:
            st.last_seen = t
        if st.phase == BackoffPhase.WAITING:
            # an occluded human is not a passed human: the refuge pocket
            # hides most of the corridor, so give sight a grace period
            unseen = trigger_state is None and t - st.last_seen > UNSEEN_GRACE
            if unseen or (
                trigger_state is not None and self._human_passed(trigger_state, st)
            ):
                self._set_phase(BackoffPhase.RESUMING, t, "human_passed")
                return self._resuming_step(robot, grid, t)
            if t - st.wait_since > self.params.wait_timeout:
                self._set_phase(BackoffPhase.RESUMING, t, "wait_timeout")
                return self._resuming_step(robot, grid, t)
            return Twist2D()
        return self._resuming_step(robot, grid, t)

    def _resuming_step(self, robot: AgentState, grid, t: float) -> Twist2D:
        """Retrace the backoff detour before handing control to the planner:
        first out of the side pocket the way we drove in, then back to where
        the stand-off began, so the planner restarts from a cleared pose."""
        st = self._backoff
        if st is None:
            return self._resume(t)
        if st.resume_route is None:
            st.resume_route = [
                p for p in (st.refuge_from, st.return_point) if p is not None
            ]
            st.resume_since = t
        if t - st.resume_since > 10.0:
            return self._resume(t)  # retrace stalled: let the planner cope
        while st.resume_route:
            cmd = self._goto(robot, st.resume_route[0])
            if cmd is not None:
                return cmd
            st.resume_route.pop(0)
        return self._resume(t)

    def _set_phase(self, phase: BackoffPhase, t: float, reason: str) -> None:
        st = self._backoff
        self.transition_log.append(
            f"t={t:.2f} backoff {st.phase.value}->{phase.value} reason={reason}"
        )
        st.phase = phase

    def _begin_wait(self, robot, trigger_state, st, t, reason) -> None:
        st.wait_since = t
        st.wait_pose = robot.pose
        if trigger_state is not None:
            st.wait_dir = _travel_dir(trigger_state)
        self._set_phase(BackoffPhase.WAITING, t, reason)

    def _resume(self, t: float) -> Twist2D:
        self._transition(PlanningMode.SINGLE_BAND, t, "backoff_complete")
        self._backoff = None
        # fresh stuck clock: the detour made the old closest-approach stale
        self._best_goal_dist = math.inf
        self._last_progress_t = t
        return Twist2D()

    def _human_passed(self, human: AgentState, st) -> bool:
        """True once the human has moved past the waiting spot along their
        own direction of travel (crossed the lateral plane through it)."""
        if st.wait_dir is None or st.wait_pose is None:
            return False
        d = np.array([
            human.pose.x - st.wait_pose.x, human.pose.y - st.wait_pose.y
        ])
        return float(d @ st.wait_dir) > 0.5

    def _distance_interp(self, grid: OccupancyGrid) -> FieldInterpolator:
        if self._df_cache is None or self._df_cache[0] is not grid:
            interp = FieldInterpolator(
                grid.distance_field(), grid.origin.x, grid.origin.y,
                grid.resolution,
            )
            self._df_cache = (grid, interp)
        return self._df_cache[1]

    def _find_refuge(
        self,
        robot: AgentState,
        human: AgentState,
        grid: OccupancyGrid,
        lateral_min: float = 1.0,
        search_radius: float = 2.5,
    ) -> np.ndarray | None:
        """Nearest free waiting spot clear of walls and at least
        ``lateral_min`` off the human's line of travel, staying on the
        robot's current side of that line so it never cuts across."""
        interp = self._distance_interp(grid)
        tdir = _travel_dir(human)
        hp = np.array([human.pose.x, human.pose.y])
        rp = np.array([robot.pose.x, robot.pose.y])
        res = grid.resolution
        span = np.arange(-search_radius, search_radius + res / 2, res)
        xs = rp[0] + span[None, :]
        ys = rp[1] + span[:, None]
        xs, ys = np.broadcast_arrays(xs, ys)
        clear, _, _ = interp.value_grad(xs.ravel(), ys.ravel())
        lateral = (xs.ravel() - hp[0]) * -tdir[1] + (ys.ravel() - hp[1]) * tdir[0]
        robot_side = (rp[0] - hp[0]) * -tdir[1] + (rp[1] - hp[1]) * tdir[0]
        valid = (clear >= 0.35 + self.params.side_margin) & (
            np.abs(lateral) >= lateral_min
        )
        if abs(robot_side) > 0.05:
            valid &= np.sign(lateral) == np.sign(robot_side)
        if not valid.any():
            return None
        d2 = (xs.ravel() - rp[0]) ** 2 + (ys.ravel() - rp[1]) ** 2
        order = np.argsort(np.where(valid, d2, np.inf))
        for k in order[:50]:
            if not valid[k]:
                break
            target = np.array([xs.ravel()[k], ys.ravel()[k]])
            if self._segment_clear(interp, rp, target):
                return target
        return None

    @staticmethod
    def _segment_clear(interp, a: np.ndarray, b: np.ndarray) -> bool:
        """Straight drive from a to b keeps footprint clearance."""
        length = float(np.hypot(*(b - a)))
        n = max(2, int(length / 0.1) + 1)
        pts = a[None, :] + np.linspace(0.0, 1.0, n)[:, None] * (b - a)[None, :]
        d, _, _ = interp.value_grad(pts[:, 0], pts[:, 1])
        # footprint plus the margin the drive governor wants before it
        # starts bleeding speed off, so the approach stays brisk
        return float(np.min(d)) >= 0.45

    def _goto(self, robot: AgentState, target: np.ndarray) -> Twist2D | None:
        """Turn-then-drive toward a nearby waiting spot; None once there."""
        dx = float(target[0]) - robot.pose.x
        dy = float(target[1]) - robot.pose.y
        dist = math.hypot(dx, dy)
        if dist < 0.12:
            return None
        err = normalize_angle(math.atan2(dy, dx) - robot.pose.theta)
        if abs(err) > 0.4:
            return Twist2D(angular=max(-0.8, min(0.8, 2.0 * err)))
        v = min(2.0 * self.params.backoff_speed, dist * 1.5)
        return Twist2D(linear_x=v, angular=max(-0.8, min(0.8, 2.0 * err)))

    def _reverse_away(
        self, robot: AgentState, human: AgentState, grid: OccupancyGrid
    ) -> Twist2D | None:
        """Retreat directly away from the human; None when there is no room."""
        away = np.array([
            robot.pose.x - human.pose.x, robot.pose.y - human.pose.y
        ])
        n = float(np.hypot(*away))
        if n < 1e-6:
            return None
        away /= n
        # the straight-away line may graze a wall; sweep nearby headings
        # and retreat along the most open of them
        cand = math.atan2(away[1], away[0]) + np.linspace(-1.0, 1.0, 9)
        px = robot.pose.x + 0.35 * np.cos(cand)
        py = robot.pose.y + 0.35 * np.sin(cand)
        interp = self._distance_interp(grid)
        d, _, _ = interp.value_grad(px, py)
        best = int(np.argmax(d))
        if float(d[best]) < robot.radius + 0.03:
            return None
        bearing = float(cand[best])
        tail_err = normalize_angle(bearing + math.pi - robot.pose.theta)
        # retreat nose-first when away happens to be ahead of us
        forward = abs(tail_err) > math.pi / 2
        err = normalize_angle(bearing - robot.pose.theta) if forward else tail_err
        if abs(err) > 0.35:
            # line up with the escape direction before committing to it
            return Twist2D(angular=0.5 if err > 0.0 else -0.5)
        if forward:
            return Twist2D(
                linear_x=self.params.backoff_speed,
                angular=max(-0.5, min(0.5, 1.5 * err)),
            )
        return Twist2D(
            linear_x=-self.params.backoff_speed,
            angular=max(-0.5, min(0.5, 1.5 * tail_err)),
        )

    def _reverse_along_crumbs(self, robot: AgentState, st) -> Twist2D | None:
        """Reverse toward the breadcrumb trail without turning around."""
        p = np.array([robot.pose.x, robot.pose.y])
        while st.crumbs and np.hypot(*(st.crumbs[-1] - p)) < 0.25:
            st.crumbs.pop()
        if not st.crumbs:
            return None
        target = st.crumbs[-1]
        bearing = math.atan2(target[1] - p[1], target[0] - p[0])
        # steer so the target stays directly behind the robot
        err = normalize_angle(bearing + math.pi - robot.pose.theta)
        if abs(err) > math.pi / 2:
            return None  # trail no longer behind us: reversing is unsafe
        return Twist2D(
            linear_x=-self.params.backoff_speed,
            angular=max(-0.5, min(0.5, 1.5 * err)),
        )

def _travel_dir(human: AgentState) -> np.ndarray:
    """Unit direction of travel; facing direction when standing still."""
    v = np.array([human.velocity.linear_x, human.velocity.linear_y])
    speed = float(np.hypot(*v))
    if speed > 0.1:
        return v / speed
    return np.array([math.cos(human.pose.theta), math.sin(human.pose.theta)])


@dataclass
class _BackoffState:
    phase: BackoffPhase
    trigger_human: str | None
    crumbs: list
    return_point: np.ndarray | None = None
    resume_route: list | None = None
    resume_since: float = 0.0
    last_seen: float = 0.0
    refuge: np.ndarray | None = None
    refuge_from: np.ndarray | None = None
    wait_since: float = 0.0
    wait_pose: Pose2D | None = None
    wait_dir: np.ndarray | None = None
    alarm: bool = False
