"""Human path prediction: four selectable methods producing per-human
goals and timed global plans for the band optimizer."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import AgentKind, AgentState, Pose2D, euclidean_distance
from .costmap import CostGrid
from .global_planner import NoPath, InvalidEndpoint, plan_path

HUMAN_WALK_SPEED = 1.2  # m/s, used to time grid paths
VELOBS_HORIZON = 5.0  # s
VELOBS_STEP = 0.5  # s
D_BEHIND = 1.0  # m, PredictBehind goal offset behind the robot entry pose
KAPPA_GOAL = 2.0  # heading-likelihood concentration for goal inference
MIN_DISPLACEMENT = 1e-3  # m, below this a track step carries no evidence


class PredictionMethod(enum.Enum):
    BEHIND = "PredictBehind"
    GOAL = "PredictGoal"
    VEL_OBS = "PredictVelObs"
    EXTERNAL = "PredictExternal"


@dataclass(frozen=True)
class PredictedPlan:
    human_id: str
    goal: Pose2D
    waypoints: list  # list[(Pose2D, time_offset_s)], offsets strictly increasing from 0
    confidence: float = 1.0

    def pose_at(self, t: float) -> Pose2D:
        """Linear interpolation along the plan; clamps at both ends."""
        wps = self.waypoints
        if t <= wps[0][1]:
            return wps[0][0]
        for (pa, ta), (pb, tb) in zip(wps, wps[1:]):
            if t <= tb:
                u = (t - ta) / (tb - ta)
                return Pose2D(
                    pa.x + u * (pb.x - pa.x), pa.y + u * (pb.y - pa.y), pb.theta
                )
        return wps[-1][0]


@dataclass(frozen=True)
class GoalSet:
    candidates: list  # list[Pose2D]
    posterior: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.posterior, dtype=float)
        if len(p) != len(self.candidates):
            raise ValueError("posterior length must match candidates")
        if np.any(p < 0.0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("posterior must be a probability vector")
        object.__setattr__(self, "posterior", p)

    @classmethod
    def uniform(cls, candidates: list) -> GoalSet:
        n = len(candidates)
        return cls(candidates, np.full(n, 1.0 / n))


def _timed_waypoints(poses: list, speed: float) -> list:
    """Attach time offsets = cumulative arclength / speed."""
    out = [(poses[0], 0.0)]
    t = 0.0
    for a, b in zip(poses, poses[1:]):
        seg = euclidean_distance(a, b)
        if seg <= 0.0:
            continue
        t += seg / speed
        out.append((b, t))
    return out


def _plan_to_goal(
    human: AgentState, goal: Pose2D, grid: CostGrid, confidence: float
) -> PredictedPlan:
    if euclidean_distance(human.pose, goal) < 1e-9:
        return PredictedPlan(human.id, goal, [(human.pose, 0.0)], confidence)
    try:
        path = plan_path(grid, human.pose, goal)
        poses = path.waypoints
    except (NoPath, InvalidEndpoint):
        # fall back to a straight-line plan clipped at the first obstacle;
        # covers goals projected into walls as well as blocked routes
        poses = _straight_clipped(human.pose, goal, grid)
    return PredictedPlan(
        human.id, goal, _timed_waypoints(poses, HUMAN_WALK_SPEED), confidence
    )


def _straight_clipped(start: Pose2D, goal: Pose2D, grid: CostGrid) -> list:
    base = grid.base
    dist = euclidean_distance(start, goal)
    heading = math.atan2(goal.y - start.y, goal.x - start.x)
    n = max(2, int(dist / base.resolution))
    poses = [Pose2D(start.x, start.y, heading)]
    for i in range(1, n + 1):
        u = i / n
        x = start.x + u * (goal.x - start.x)
        y = start.y + u * (goal.y - start.y)
        ix, iy = base.world_to_cell(x, y)
        if not base.in_bounds(ix, iy) or base.occupied[iy, ix]:
            break
        poses.append(Pose2D(x, y, heading))
    return poses


def predict_behind(
    robot_pose_at_entry: Pose2D, human: AgentState, grid: CostGrid
) -> PredictedPlan:
    """Goal placed d_behind meters behind the robot's pose recorded when
    the human entered the visible planning radius."""
    hx, hy = robot_pose_at_entry.heading_vector()
    goal = Pose2D(
        robot_pose_at_entry.x - D_BEHIND * hx,
        robot_pose_at_entry.y - D_BEHIND * hy,
        robot_pose_at_entry.theta,
    )
    return _plan_to_goal(human, goal, grid, confidence=1.0)


def predict_goal_update(track: list, goals: GoalSet, dt: float = 0.1) -> GoalSet:
    """Recursive Bayesian update of the goal posterior from the latest
    observed displacement, with a von-Mises-style heading likelihood."""
    if len(track) < 2:
        raise ValueError("need at least two track points")
    if not goals.candidates:
        raise ValueError("empty goal set")
    prev, cur = track[-2], track[-1]
    dx, dy = cur.x - prev.x, cur.y - prev.y
    step = math.hypot(dx, dy)
    if step < MIN_DISPLACEMENT:
        return goals  # stationary: no evidence
    like = np.empty(len(goals.candidates))
    for i, g in enumerate(goals.candidates):
        gx, gy = g.x - prev.x, g.y - prev.y
        gnorm = math.hypot(gx, gy)
        if gnorm < MIN_DISPLACEMENT:
            cos_a = 1.0  # already at this goal: any motion is neutral
        else:
            cos_a = (dx * gx + dy * gy) / (step * gnorm)
        like[i] = math.exp(KAPPA_GOAL * cos_a)
    post = goals.posterior * like
    post /= post.sum()
    return GoalSet(goals.candidates, post)


def predict_goal(
    track: list, goals: GoalSet, grid: CostGrid, human_id: str = "human"
) -> PredictedPlan:
    """Plan to the argmax-posterior goal; ties broken by the nearest goal."""
    cur = track[-1]
    best = np.max(goals.posterior)
    tied = [i for i, p in enumerate(goals.posterior) if p >= best - 1e-12]
    idx = min(
        tied, key=lambda i: euclidean_distance(cur, goals.candidates[i])
    )
    human = AgentState(id=human_id, kind=AgentKind.HUMAN, pose=cur)
    return _plan_to_goal(human, goals.candidates[idx], grid, float(best))


def predict_vel_obs(
    human: AgentState,
    horizon: float = VELOBS_HORIZON,
    step: float = VELOBS_STEP,
) -> PredictedPlan:
    """Constant-velocity extrapolation over a fixed horizon; no goal
    inference (the goal is just the last waypoint)."""
    v = human.velocity
    if not (math.isfinite(v.linear_x) and math.isfinite(v.linear_y)):
        raise ValueError("non-finite human velocity")
    p0 = human.pose
    if v.speed() <= 0.0:
        return PredictedPlan(human.id, p0, [(p0, 0.0)], 1.0)
    heading = math.atan2(v.linear_y, v.linear_x)
    waypoints = [(Pose2D(p0.x, p0.y, heading), 0.0)]
    t = step
    while t <= horizon + 1e-9:
        waypoints.append(
            (Pose2D(p0.x + v.linear_x * t, p0.y + v.linear_y * t, heading), t)
        )
        t += step
    goal = waypoints[-1][0]
    return PredictedPlan(human.id, goal, waypoints, 1.0)


def predict_external(human: AgentState, goal: Pose2D, grid: CostGrid) -> PredictedPlan:
    """Plan to a goal supplied by an external system."""
    base = grid.base
    ix, iy = base.world_to_cell(goal.x, goal.y)
    if not base.in_bounds(ix, iy) or base.occupied[iy, ix]:
        raise InvalidEndpoint("external goal invalid on grid")
    return _plan_to_goal(human, goal, grid, confidence=1.0)
