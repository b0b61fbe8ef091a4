"""Timed elastic band containers, initialization and command extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import AgentState, Activity, Pose2D, Twist2D, euclidean_distance, normalize_angle
from .global_planner import GlobalPath
from .prediction import PredictedPlan

DT_MIN = 0.01  # s, lower bound on every time delta
POSE_SPACING = 0.4  # m, initial inter-pose spacing
SPACING_MIN = 0.2  # m, resize: merge below this
SPACING_MAX = 0.6  # m, resize: split above this
LOCAL_HORIZON = 5.0  # m of global path covered by the band
N_MAX_POSES = 40
DEFAULT_LOOKAHEAD = 0.3  # s, command extraction window


@dataclass(frozen=True)
class KinodynamicLimits:
    v_max: float = 0.8
    omega_max: float = 1.0
    a_max: float = 0.8
    nonholonomic: bool = True


HUMAN_LIMITS = KinodynamicLimits(v_max=1.3, omega_max=2.0, a_max=0.6, nonholonomic=True)


@dataclass(frozen=True)
class ConstraintWeights:
    w_obstacle: float = 50.0
    w_kinodynamic: float = 50.0
    w_time: float = 1.0
    w_viapoint: float = 0.2
    w_safety: float = 20.0
    w_visibility: float = 2.0
    w_rel_vel: float = 1.0
    w_human_kinodynamic: float = 20.0
    ttc_enabled: bool = False
    ttcplus_enabled: bool = False

    def __post_init__(self):
        for name in (
            "w_obstacle", "w_kinodynamic", "w_time", "w_viapoint",
            "w_safety", "w_visibility", "w_rel_vel", "w_human_kinodynamic",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.ttc_enabled or self.ttcplus_enabled:
            raise NotImplementedError(
                "TTC/TTCplus constraints come from prior work and are kept "
                "deactivated; enabling them is not supported"
            )


@dataclass
class TimedBand:
    """Sequence of poses with elastic time intervals. poses is an (n, 3)
    float array, time_deltas an (n-1,) array; endpoints are fixed during
    optimization."""

    agent_id: str
    poses: np.ndarray
    time_deltas: np.ndarray

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float)
        self.time_deltas = np.asarray(self.time_deltas, dtype=float)
        if self.poses.ndim != 2 or self.poses.shape[1] != 3 or len(self.poses) < 2:
            raise ValueError("band needs at least two (x, y, theta) poses")
        if len(self.time_deltas) != len(self.poses) - 1:
            raise ValueError("need n-1 time deltas for n poses")
        if np.any(self.time_deltas < DT_MIN - 1e-12):
            raise ValueError("time deltas must be >= DT_MIN")

    @property
    def n(self) -> int:
        return len(self.poses)

    def timestamps(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.time_deltas)])

    def duration(self) -> float:
        return float(self.time_deltas.sum())

    def copy(self) -> TimedBand:
        return TimedBand(self.agent_id, self.poses.copy(), self.time_deltas.copy())

    def pose_at(self, t: float) -> np.ndarray:
        """Linear interpolation along the band timeline, clamped."""
        ts = self.timestamps()
        if t <= 0.0:
            return self.poses[0].copy()
        if t >= ts[-1]:
            return self.poses[-1].copy()
        j = int(np.searchsorted(ts, t, side="right")) - 1
        u = (t - ts[j]) / self.time_deltas[j]
        a, b = self.poses[j], self.poses[j + 1]
        theta = normalize_angle(a[2] + u * normalize_angle(b[2] - a[2]))
        return np.array([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]), theta])


@dataclass
class BandSet:
    robot_band: TimedBand
    human_bands: list = field(default_factory=list)  # list[TimedBand], <= 2
    human_plans: dict = field(default_factory=dict)  # human_id -> PredictedPlan

    def __post_init__(self):
        if len(self.human_bands) > 2:
            raise ValueError("at most two human bands")


@dataclass
class OptimizationReport:
    iterations: int = 0
    final_residual_norm: float = 0.0
    cost_breakdown: dict = field(default_factory=dict)
    wall_us: float = 0.0
    converged: bool = True
    nan_abort: bool = False

    def total_cost(self) -> float:
        return sum(self.cost_breakdown.values())


def _resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample an (n, 2) polyline at (approximately) uniform arclength
    spacing, keeping both endpoints."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 1e-9:
        return points[[0, -1]].copy()
    n_seg = max(1, int(round(total / spacing)))
    targets = np.linspace(0.0, total, n_seg + 1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    out = np.empty((len(targets), 2))
    for k, s in enumerate(targets):
        j = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        u = 0.0 if seg[j] <= 1e-12 else (s - cum[j]) / seg[j]
        out[k] = points[j] + u * (points[j + 1] - points[j])
    return out


def _headings_along(points: np.ndarray, final_theta: float) -> np.ndarray:
    thetas = np.empty(len(points))
    for i in range(len(points) - 1):
        d = points[i + 1] - points[i]
        thetas[i] = math.atan2(d[1], d[0]) if np.hypot(*d) > 1e-9 else final_theta
    thetas[-1] = final_theta
    return thetas


def band_from_polyline(
    agent_id: str,
    points: np.ndarray,
    start_pose: Pose2D,
    final_theta: float,
    cruise_speed: float,
    spacing: float = POSE_SPACING,
) -> TimedBand:
    pts = _resample_polyline(np.asarray(points, dtype=float), spacing)
    thetas = _headings_along(pts, final_theta)
    poses = np.column_stack([pts, thetas])
    poses[0] = [start_pose.x, start_pose.y, start_pose.theta]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    dts = np.maximum(DT_MIN, seg / max(cruise_speed, 0.05))
    # a degenerate single-segment zero-length band still needs a valid dt
    dts[dts < DT_MIN] = DT_MIN
    return TimedBand(agent_id, poses, dts)


def _truncate_path_points(path: GlobalPath, horizon: float) -> tuple[np.ndarray, bool]:
    """Clip the global path to the local horizon arclength. Returns the
    points and whether the final goal survived the cut."""
    pts = np.array([[p.x, p.y] for p in path.waypoints], dtype=float)
    if len(pts) == 1:
        return np.vstack([pts, pts]), True
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= horizon:
        return pts, True
    j = int(np.searchsorted(cum, horizon, side="right")) - 1
    u = (horizon - cum[j]) / seg[j] if seg[j] > 1e-12 else 0.0
    cut = pts[j] + u * (pts[j + 1] - pts[j])
    return np.vstack([pts[: j + 1], cut]), False


def initialize_robot_band(
    path: GlobalPath,
    robot: AgentState,
    limits: KinodynamicLimits,
    previous: TimedBand | None = None,
    horizon: float = LOCAL_HORIZON,
) -> TimedBand:
    """Sample the robot band from the global path; warm-start from the
    previous cycle's band when the (truncated) goal is unchanged."""
    pts, reaches_goal = _truncate_path_points(path, horizon)
    final_theta = (
        path.waypoints[-1].theta if reaches_goal else _headings_along(pts, 0.0)[-2]
    )
    if previous is not None and len(previous.poses) >= 3:
        prev_end = previous.poses[-1]
        # a sliding horizon moves the truncated end a little every cycle;
        # keep the optimized band and retarget its end so progress is not
        # thrown away, but re-seed when the path end jumps (reroute)
        if np.hypot(prev_end[0] - pts[-1][0], prev_end[1] - pts[-1][1]) < 0.6:
            band = _warm_start(previous, robot)
            band.poses[-1] = [pts[-1][0], pts[-1][1], final_theta]
            return band
    return band_from_polyline(
        "robot", pts, robot.pose, final_theta, cruise_speed=limits.v_max
    )


def _warm_start(previous: TimedBand, robot: AgentState) -> TimedBand:
    """Shift the previous band to the current state, dropping passed poses."""
    p = np.array([robot.pose.x, robot.pose.y])
    d = np.linalg.norm(previous.poses[:, :2] - p, axis=1)
    k = int(np.argmin(d))
    k = min(k, previous.n - 2)
    poses = previous.poses[k:].copy()
    dts = previous.time_deltas[k:].copy()
    poses[0] = [robot.pose.x, robot.pose.y, robot.pose.theta]
    if len(poses) < 2:
        poses = np.vstack([poses, poses[-1]])
        dts = np.array([DT_MIN])
    return TimedBand(previous.agent_id, poses, dts)


def initialize_human_band(
    plan: PredictedPlan,
    human: AgentState,
    limits: KinodynamicLimits = HUMAN_LIMITS,
    horizon: float = LOCAL_HORIZON,
) -> TimedBand:
    pts = np.array([[p.x, p.y] for p, _ in plan.waypoints], dtype=float)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] > horizon:
        j = int(np.searchsorted(cum, horizon, side="right")) - 1
        u = (horizon - cum[j]) / seg[j] if seg[j] > 1e-12 else 0.0
        pts = np.vstack([pts[: j + 1], pts[j] + u * (pts[j + 1] - pts[j])])
    final_theta = _headings_along(pts, human.pose.theta)[-2] if len(pts) > 1 else human.pose.theta
    cruise = min(limits.v_max, 1.2)
    return band_from_polyline(human.id, pts, human.pose, final_theta, cruise)


def initialize_bandset(
    robot_path: GlobalPath,
    human_plans: list,
    robot: AgentState,
    humans: dict,
    limits: KinodynamicLimits,
    previous: BandSet | None = None,
    horizon: float = LOCAL_HORIZON,
) -> BandSet:
    """Build the band set for one control cycle.

    ``human_plans`` lists the PredictedPlans of humans that get their own
    band (at most two); ``humans`` maps id -> AgentState for those humans.
    """
    prev_robot = previous.robot_band if previous is not None else None
    robot_band = initialize_robot_band(
        robot_path, robot, limits, previous=prev_robot, horizon=horizon
    )
    bands = []
    for plan in human_plans[:2]:
        bands.append(
            initialize_human_band(plan, humans[plan.human_id], horizon=horizon)
        )
    return BandSet(
        robot_band=robot_band,
        human_bands=bands,
        human_plans={p.human_id: p for p in human_plans[:2]},
    )


def resize_band(band: TimedBand, n_max: int = N_MAX_POSES) -> TimedBand:
    """Insert/remove poses to keep spatial density within
    [SPACING_MIN, SPACING_MAX] meters."""
    poses = [band.poses[i] for i in range(band.n)]
    dts = list(band.time_deltas)
    # split long segments
    i = 0
    while i < len(dts) and len(poses) < n_max:
        a, b = poses[i], poses[i + 1]
        if math.hypot(b[0] - a[0], b[1] - a[1]) > SPACING_MAX:
            mid = (a + b) / 2.0
            mid[2] = normalize_angle(a[2] + 0.5 * normalize_angle(b[2] - a[2]))
            poses.insert(i + 1, mid)
            half = max(DT_MIN, dts[i] / 2.0)
            dts[i] = half
            dts.insert(i + 1, half)
        else:
            i += 1
    # merge short interior segments
    i = 1
    while i < len(poses) - 1:
        a, b = poses[i - 1], poses[i]
        if math.hypot(b[0] - a[0], b[1] - a[1]) < SPACING_MIN and len(poses) > 2:
            dts[i - 1] = max(DT_MIN, dts[i - 1] + dts[i])
            del dts[i]
            del poses[i]
        else:
            i += 1
    return TimedBand(band.agent_id, np.array(poses), np.array(dts))


def extract_command(
    band: TimedBand,
    limits: KinodynamicLimits,
    lookahead: float = DEFAULT_LOOKAHEAD,
) -> Twist2D:
    """Velocity command from the first band segment(s) spanning the
    lookahead window, clipped to the kinodynamic limits."""
    duration = band.duration()
    start = band.poses[0]
    if duration <= 1e-9 or np.allclose(band.poses[0][:2], band.poses[-1][:2], atol=1e-9) and band.n == 2:
        d = math.hypot(*(band.poses[-1][:2] - band.poses[0][:2]))
        dth = abs(normalize_angle(band.poses[-1][2] - band.poses[0][2]))
        if d <= 1e-9 and dth <= 1e-9:
            return Twist2D()
    tau = min(lookahead, duration)
    if tau <= 1e-9:
        return Twist2D()
    target = band.pose_at(tau)
    dx, dy = target[0] - start[0], target[1] - start[1]
    forward = math.cos(start[2]) * dx + math.sin(start[2]) * dy
    v = forward / tau
    omega = normalize_angle(target[2] - start[2]) / tau
    v = max(-limits.v_max, min(limits.v_max, v))
    omega = max(-limits.omega_max, min(limits.omega_max, omega))
    return Twist2D(linear_x=v, angular=omega)


def select_nearest_dynamic_humans(
    humans: list, robot: AgentState, k: int = 2
) -> list:
    """Pick up to k moving humans by distance to the robot.

    ``humans`` holds (AgentState, HumanActivity) pairs already filtered by
    visibility and planning radius. Humans behind the robot are excluded;
    Unknown activity counts as potentially moving.
    """
    hx, hy = robot.pose.heading_vector()
    eligible = []
    for state, activity in humans:
        if activity.value == Activity.STATIC:
            continue
        ahead = (state.pose.x - robot.pose.x) * hx + (state.pose.y - robot.pose.y) * hy
        if ahead < 0.0:
            continue
        eligible.append((euclidean_distance(state.pose, robot.pose), state))
    eligible.sort(key=lambda e: (e[0], e[1].id))
    return [state for _, state in eligible[:k]]
