"""Deterministic fixed-step 2D world with a differential-drive robot,
scripted/ghost/external humans, and the closed planning loop."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    AgentKind,
    AgentState,
    DEFAULT_HUMAN_RADIUS,
    DEFAULT_ROBOT_RADIUS,
    Pose2D,
    Twist2D,
    euclidean_distance,
    normalize_angle,
)
from .costmap import (
    CostGrid,
    HumanLayerConfig,
    OccupancyGrid,
    apply_human_safety_layer,
    apply_human_visibility_layer,
    inflate_obstacles,
)
from .band import (
    BandSet,
    ConstraintWeights,
    HUMAN_LIMITS,
    KinodynamicLimits,
    extract_command,
    initialize_bandset,
    select_nearest_dynamic_humans,
)
from .global_planner import PlanningError, plan_path
from .modes import ModeController, PlanningMode, TransitionParams
from .optimizer import OptimizationContext, optimize
from .prediction import (
    GoalSet,
    PredictedPlan,
    PredictionMethod,
    predict_behind,
    predict_external,
    predict_goal,
    predict_goal_update,
    predict_vel_obs,
)
from .residuals import FieldInterpolator

DT = 0.05  # s, simulation step
PLANNER_EVERY = 2  # sim steps between control cycles (10 Hz)
GOAL_POS_TOL = 0.2  # m
GOAL_ANG_TOL = 0.2  # rad
HUMAN_V_MAX = 1.3  # m/s, holonomic human speed clamp
COMMAND_STALENESS = 0.5  # s, External commands older than this read as zero
YIELD_DISTANCE = 1.5  # m, scripted walkers stop for a robot this close ahead
YIELD_HALF_ANGLE = math.pi / 3


# ---------------------------------------------------------------------------
# world state and integration

@dataclass
class World:
    grid: OccupancyGrid
    robot: AgentState
    humans: dict  # id -> AgentState
    t: float = 0.0
    robot_wall_contact: bool = False
    robot_human_contact: bool = False

    def human_list(self):
        return [self.humans[k] for k in sorted(self.humans)]


def _wall_clearance(interp: FieldInterpolator, x: float, y: float) -> float:
    d, _, _ = interp.value_grad(x, y)
    return float(d)


def _distance_interp(grid: OccupancyGrid) -> FieldInterpolator:
    return FieldInterpolator(
        grid.distance_field(), grid.origin.x, grid.origin.y, grid.resolution
    )


def step(
    world: World,
    robot_command: Twist2D,
    dt: float = DT,
    limits: KinodynamicLimits | None = None,
    interp: FieldInterpolator | None = None,
    human_moves: dict | None = None,
) -> World:
    """Advance the world one step. The robot integrates unicycle
    kinematics; humans move per ``human_moves`` (id -> AgentState or
    Twist2D). Wall penetration blocks motion and raises a contact flag."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    limits = limits or KinodynamicLimits()
    if interp is None:
        interp = _distance_interp(world.grid)
    v = max(-limits.v_max, min(limits.v_max, robot_command.linear_x))
    w = max(-limits.omega_max, min(limits.omega_max, robot_command.angular))
    r = world.robot
    nx = r.pose.x + v * math.cos(r.pose.theta) * dt
    ny = r.pose.y + v * math.sin(r.pose.theta) * dt
    nth = r.pose.theta + w * dt
    wall_contact = False
    if _wall_clearance(interp, nx, ny) < r.radius:
        nx, ny = r.pose.x, r.pose.y  # blocked at contact, rotation still free
        wall_contact = True
    robot = r.with_pose(Pose2D(nx, ny, nth), Twist2D(v, 0.0, w))

    humans = dict(world.humans)
    for hid, move in (human_moves or {}).items():
        h = humans[hid]
        if isinstance(move, AgentState):
            humans[hid] = move  # controller supplied the exact next state
            continue
        speed = move.speed()
        if speed > HUMAN_V_MAX:
            scale = HUMAN_V_MAX / speed
            move = Twist2D(move.linear_x * scale, move.linear_y * scale)
        hx = h.pose.x + move.linear_x * dt
        hy = h.pose.y + move.linear_y * dt
        if _wall_clearance(interp, hx, hy) < h.radius:
            hx, hy = h.pose.x, h.pose.y
            move = Twist2D()
        theta = (
            math.atan2(move.linear_y, move.linear_x)
            if move.speed() > 1e-9
            else h.pose.theta
        )
        humans[hid] = h.with_pose(Pose2D(hx, hy, theta), move)

    contact = any(
        euclidean_distance(robot.pose, h.pose) < robot.radius + h.radius
        for h in humans.values()
    )
    return replace(
        world,
        robot=robot,
        humans=humans,
        t=world.t + dt,
        robot_wall_contact=wall_contact,
        robot_human_contact=contact,
    )


# ---------------------------------------------------------------------------
# human controllers

class HumanController:
    def step(self, world: World, human: AgentState, dt: float):
        """Returns a Twist2D (integrated by the world) or an AgentState
        (applied exactly)."""
        raise NotImplementedError


class ScriptedWaypoints(HumanController):
    """Deterministic walker: waypoint pursuit with a trapezoidal speed
    profile and a front-cone yield for the robot."""

    def __init__(
        self,
        waypoints: list,
        speed: float = 1.2,
        accel: float = 0.6,
        start_delay: float = 0.0,
        yields: bool = True,
    ):
        self.waypoints = [np.asarray(w, dtype=float) for w in waypoints]
        self.cruise = speed
        self.accel = accel
        self.start_delay = start_delay
        self.yields = yields
        self._i = 0
        self._speed = 0.0

    def done(self, human: AgentState) -> bool:
        return self._i >= len(self.waypoints)

    def _remaining(self, p: np.ndarray) -> float:
        if self._i >= len(self.waypoints):
            return 0.0
        pts = [p] + self.waypoints[self._i :]
        return float(
            sum(np.hypot(*(b - a)) for a, b in zip(pts, pts[1:]))
        )

    def step(self, world: World, human: AgentState, dt: float):
        if world.t < self.start_delay:
            return Twist2D()
        p = np.array([human.pose.x, human.pose.y])
        while self._i < len(self.waypoints) and np.hypot(*(self.waypoints[self._i] - p)) < 0.15:
            self._i += 1
        if self._i >= len(self.waypoints):
            self._speed = 0.0
            return Twist2D()
        target = self.waypoints[self._i]
        direction = target - p
        dist = float(np.hypot(*direction))
        direction /= max(dist, 1e-9)
        want = min(self.cruise, math.sqrt(2.0 * self.accel * self._remaining(p)))
        if self.yields and self._robot_ahead(world, human, direction):
            want = 0.0
        # accel-limited approach to the wanted speed
        if want > self._speed:
            self._speed = min(want, self._speed + self.accel * dt)
        else:
            self._speed = max(want, self._speed - 2.0 * self.accel * dt)
        return Twist2D(self._speed * direction[0], self._speed * direction[1])

    def _robot_ahead(self, world: World, human: AgentState, direction) -> bool:
        r = world.robot.pose
        d = np.array([r.x - human.pose.x, r.y - human.pose.y])
        dist = float(np.hypot(*d))
        if dist > YIELD_DISTANCE or dist < 1e-9:
            return False
        if world.robot.velocity.speed() < 0.05:
            # a parked robot clear of the walking line gets walked past
            lateral = abs(float(d[0] * direction[1] - d[1] * direction[0]))
            if lateral > 0.75:
                return False
        cos_a = float(d @ direction) / dist
        return cos_a > math.cos(YIELD_HALF_ANGLE)


class ConstantVelocity(HumanController):
    def __init__(self, vx: float, vy: float, start_delay: float = 0.0):
        self.velocity = Twist2D(vx, vy)
        self.start_delay = start_delay

    def step(self, world: World, human: AgentState, dt: float):
        if world.t < self.start_delay:
            return Twist2D()
        return self.velocity


class PlannerGhost(HumanController):
    """Follows the planner's own human band exactly — the idealized human
    who moves just as the robot expects."""

    def __init__(self):
        self.band = None
        self.band_t0 = 0.0

    def observe_band(self, band, t0: float) -> None:
        self.band = band
        self.band_t0 = t0

    def step(self, world: World, human: AgentState, dt: float):
        if self.band is None:
            return Twist2D()
        t_next = world.t + dt - self.band_t0
        pose = self.band.pose_at(t_next)
        prev = self.band.pose_at(world.t - self.band_t0)
        vel = Twist2D((pose[0] - prev[0]) / dt, (pose[1] - prev[1]) / dt)
        return human.with_pose(Pose2D(pose[0], pose[1], pose[2]), vel)


class External(HumanController):
    """Mailbox-driven human; commands expire after COMMAND_STALENESS."""

    def __init__(self):
        self.command = Twist2D()
        self.command_t = -math.inf

    def submit(self, vx: float, vy: float, t: float) -> Twist2D:
        """Queue a command; returns the (possibly clamped) applied value."""
        speed = math.hypot(vx, vy)
        if speed > HUMAN_V_MAX:
            scale = HUMAN_V_MAX / speed
            vx, vy = vx * scale, vy * scale
        self.command = Twist2D(vx, vy)
        self.command_t = t
        return self.command

    def step(self, world: World, human: AgentState, dt: float):
        if world.t - self.command_t > COMMAND_STALENESS:
            return Twist2D()
        return self.command


# ---------------------------------------------------------------------------
# scenario specification

@dataclass(frozen=True)
class HumanSpec:
    id: str
    start: Pose2D
    controller: str  # scripted | constant | ghost | external
    waypoints: tuple = ()
    speed: float = 1.2
    start_delay: float = 0.0
    velocity: tuple = (0.0, 0.0)
    goal: Pose2D | None = None
    yields: bool = True


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    map_text: str
    robot_start: Pose2D
    robot_goal: Pose2D
    humans: tuple = ()
    prediction: PredictionMethod = PredictionMethod.BEHIND
    goal_candidates: tuple = ()  # shared human goal hypotheses (PredictGoal)
    mode_lock: str | None = None
    seed: int = 0
    max_time: float = 60.0
    params: TransitionParams = field(default_factory=TransitionParams)


def make_controller(spec: HumanSpec, rng: random.Random) -> HumanController:
    """Instantiate a controller; scripted walkers get seeded jitter on
    speed and start delay so repetitions differ."""
    if spec.controller == "scripted":
        return ScriptedWaypoints(
            [tuple(w) for w in spec.waypoints],
            speed=max(0.4, spec.speed * rng.uniform(0.9, 1.1)),
            start_delay=spec.start_delay + rng.uniform(0.0, 0.4),
            yields=spec.yields,
        )
    if spec.controller == "constant":
        return ConstantVelocity(*spec.velocity, start_delay=spec.start_delay)
    if spec.controller == "ghost":
        return PlannerGhost()
    if spec.controller == "external":
        return External()
    raise ValueError(f"unknown human controller {spec.controller!r}")


# ---------------------------------------------------------------------------
# planner session: one full perception->mode->predict->optimize cycle

class PlannerSession:
    def __init__(
        self,
        grid: OccupancyGrid,
        goal: Pose2D,
        prediction: PredictionMethod = PredictionMethod.BEHIND,
        mode_lock: PlanningMode | None = None,
        params: TransitionParams | None = None,
        weights: ConstraintWeights | None = None,
        limits: KinodynamicLimits | None = None,
        budget: int = 40,
        external_goals: dict | None = None,
        goal_candidates: tuple = (),
    ):
        self.grid = grid
        self.goal = goal
        self.limits = limits or KinodynamicLimits()
        self.weights = weights or ConstraintWeights()
        self.budget = budget
        self.controller = ModeController(
            goal, params=params, prediction=prediction, mode_lock=mode_lock
        )
        self.external_goals = external_goals or {}
        self.goal_candidates = tuple(goal_candidates)
        self._goal_sets: dict = {}  # human id -> GoalSet posterior
        self._tracks: dict = {}  # human id -> recent observed poses
        self._inflated = inflate_obstacles(
            CostGrid(grid), inflation_radius=1.0, inscribed_radius=DEFAULT_ROBOT_RADIUS
        )
        self._interp = _distance_interp(grid)
        self._bands: BandSet | None = None
        self._last_command = Twist2D()
        self.last_report = None
        self.last_mode = self.controller.mode
        self.last_human_plans: dict = {}
        self.last_band_t0 = 0.0
        self.cycle_wall_us: list = []
        self._stall_cycles = 0
        self._unwedging = False
        self.last_snapshot = None

    def set_goal(self, goal: Pose2D, t: float) -> None:
        self.goal = goal
        self.controller.set_goal(goal, t)
        self._bands = None

    # -- helpers -----------------------------------------------------------

    def _cost_grid(self, snapshot) -> CostGrid:
        statics = [s for s, _, _ in snapshot.static_humans()]
        g = self._inflated
        if statics:
            cfg = HumanLayerConfig()
            g = apply_human_safety_layer(g, statics, cfg)
            g = apply_human_visibility_layer(g, statics, cfg)
        return g

    def _nudge_free(self, grid: CostGrid, pose: Pose2D) -> Pose2D:
        """Closest nearby free-cell center when the pose cell is lethal."""
        combined = grid.combined()
        base = grid.base
        ix, iy = base.world_to_cell(pose.x, pose.y)
        if base.in_bounds(ix, iy) and combined[iy, ix] < 0.99:
            return pose
        best = None
        for r in range(1, 8):
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    if max(abs(dx), abs(dy)) != r:
                        continue
                    jx, jy = ix + dx, iy + dy
                    if not base.in_bounds(jx, jy) or combined[jy, jx] >= 0.99:
                        continue
                    cx, cy = base.cell_center(jx, jy)
                    d = math.hypot(cx - pose.x, cy - pose.y)
                    if best is None or d < best[0]:
                        best = (d, cx, cy)
            if best is not None:
                return Pose2D(best[1], best[2], pose.theta)
        return pose

    def _predict(self, mode, robot, grid, band_humans):
        plans = []
        for human in band_humans:
            if mode == PlanningMode.VEL_OBS:
                plans.append(predict_vel_obs(human))
            elif (
                self.controller.default_prediction == PredictionMethod.EXTERNAL
                and human.id in self.external_goals
            ):
                plans.append(
                    predict_external(human, self.external_goals[human.id], grid)
                )
            elif (
                self.controller.default_prediction == PredictionMethod.GOAL
                and self.goal_candidates
                and len(self._tracks.get(human.id, ())) >= 2
            ):
                plans.append(
                    predict_goal(
                        self._tracks[human.id],
                        self._goal_sets[human.id],
                        grid,
                        human_id=human.id,
                    )
                )
            else:
                entry = self.controller.entry_pose(human.id) or robot.pose
                plans.append(predict_behind(entry, human, grid))
        return plans

    def _update_goal_beliefs(self, snapshot) -> None:
        if not self.goal_candidates:
            return
        candidates = [Pose2D(x, y, 0.0) for x, y in self.goal_candidates]
        for state, _, _ in snapshot.visible_humans:
            track = self._tracks.setdefault(state.id, [])
            track.append(state.pose)
            if len(track) > 50:
                del track[0]
            goals = self._goal_sets.setdefault(
                state.id, GoalSet.uniform(candidates)
            )
            if len(track) >= 2:
                self._goal_sets[state.id] = predict_goal_update(track, goals)

    # -- the control cycle -------------------------------------------------

    def control(self, world: World) -> Twist2D:
        snapshot = self.controller.assess(
            world.robot, world.human_list(), self.grid, world.t
        )
        self.last_snapshot = snapshot
        self._update_goal_beliefs(snapshot)
        if self.last_report is not None:
            self.controller.observe_optimizer(
                self.last_report.converged, world.t
            )
        mode = self.controller.select_mode(snapshot)
        if mode != self.last_mode:
            change = self.controller.on_mode_change(mode)
            if change.drop_all_human_bands:
                self._bands = None
            self.last_mode = mode

        if mode == PlanningMode.BACKOFF:
            cmd = self.controller.backoff_step(
                world.robot, snapshot, self.grid, world.t
            )
            cmd = self._govern(cmd, world)
            self.last_mode = self.controller.mode  # backoff may have exited
            self._bands = None
            self.last_human_plans = {}
            self._last_command = cmd
            return cmd

        grid = self._cost_grid(snapshot)
        start = self._nudge_free(grid, world.robot.pose)
        goal = self._nudge_free(grid, self.goal)
        try:
            path = plan_path(grid, start, goal)
        except PlanningError:
            self._last_command = Twist2D()
            return self._last_command

        visible = snapshot.visible_humans
        if mode == PlanningMode.SINGLE_BAND:
            band_humans = []
        elif mode == PlanningMode.VEL_OBS:
            band_humans = [
                s for s, a, _ in snapshot.dynamic_humans()
                if s.velocity.speed() > 1e-9
            ][:2]
        else:
            band_humans = select_nearest_dynamic_humans(
                [(s, a) for s, a, _ in visible], world.robot
            )
        plans = self._predict(mode, world.robot, grid, band_humans)
        humans_by_id = {h.id: h for h in band_humans}
        band_ids = set(humans_by_id)
        previous = self._bands
        if previous is not None and not self._band_clear(previous.robot_band):
            previous = None  # stale band crosses an obstacle: rebuild fresh
        if previous is not None:
            d0, _, _ = self._interp.value_grad(world.robot.pose.x, world.robot.pose.y)
            if float(d0) < world.robot.radius + 0.02:
                previous = None  # wedged against a wall: re-seed an escape path
        if previous is not None and self._stall_cycles >= 20:
            previous = None  # band settled into a standstill: re-seed
            self._stall_cycles = 0
        bands = initialize_bandset(
            path, plans, world.robot, humans_by_id, self.limits,
            previous=previous,
        )
        fixed = []
        for s, _, _ in visible:
            if s.id not in band_ids:
                fixed.append((s, predict_vel_obs(s)))
        via = np.array([[p.x, p.y] for p in path.waypoints])
        ctx = OptimizationContext(
            limits=self.limits,
            v_start=world.robot.velocity.linear_x,
            via_points=via,
            fixed_humans=fixed,
            # VelObs runs with reduced separation constraints so the robot
            # can squeeze through spaces the comfort margin would forbid
            d_safe=0.35 if mode == PlanningMode.VEL_OBS else 0.6,
        )
        bands, report = optimize(
            bands, grid, self.weights, budget=self.budget, ctx=ctx,
            interp=self._interp,
        )
        self.last_report = report
        self.cycle_wall_us.append(report.wall_us)
        if report.nan_abort:
            return self._last_command  # hold the previous command
        self._bands = bands
        self.last_human_plans = {p.human_id: p for p in plans}
        self.last_band_t0 = world.t
        cmd = extract_command(bands.robot_band, self.limits)
        raw_v = cmd.linear_x
        cmd = self._govern(cmd, world)
        if self._unwedging:
            d0, _, _ = self._interp.value_grad(
                world.robot.pose.x, world.robot.pose.y
            )
            gap = float(d0) - world.robot.radius
            # escape is over once there is room again and the plan either
            # flows through the guard or asks for rotation only
            if gap > 0.12 and (raw_v <= 0.05 or cmd.linear_x >= 0.5 * raw_v):
                self._unwedging = False
                self._bands = None
            else:
                cmd = self._unwedge(cmd, world)
        elif raw_v > 0.05 and cmd.linear_x == 0.0:
            cmd = self._unwedge(cmd, world)
        if abs(cmd.linear_x) < 0.02 and abs(cmd.angular) < 0.05:
            self._stall_cycles += 1
        else:
            self._stall_cycles = 0
        self._last_command = cmd
        return cmd

    def _band_clear(self, band) -> bool:
        p = band.poses[1:-1]
        if len(p) == 0:
            return True
        d, _, _ = self._interp.value_grad(p[:, 0], p[:, 1])
        return float(np.min(d)) >= DEFAULT_ROBOT_RADIUS

    def _unwedge(self, cmd: Twist2D, world: World) -> Twist2D:
        """Back out of a corner the guard will not let us drive past.

        A robot parked almost touching a convex corner can have a feasible
        band whose every forward arc still grazes the wall; without this the
        guard zeroes the drive forever. Reversing a little restores room so
        the next plan approaches the opening square-on.
        """
        r = world.robot
        d0, _, _ = self._interp.value_grad(r.pose.x, r.pose.y)
        gap = float(d0) - r.radius
        if not self._unwedging and gap > 0.12:
            return cmd
        self._unwedging = True
        # escape by reversing into the most open direction behind some
        # heading; rotate first when the current tail is the wrong one.
        # world-frame candidates keep the pick stable while rotating
        cand = np.linspace(-math.pi, math.pi, 32, endpoint=False)
        bx = r.pose.x - 0.30 * np.cos(cand)
        by = r.pose.y - 0.30 * np.sin(cand)
        db, _, _ = self._interp.value_grad(bx, by)
        db = np.asarray(db, float)
        for h in world.humans.values():
            hd = np.hypot(bx - h.pose.x, by - h.pose.y)
            # a corner escape must never trade a wall graze for a person
            db[hd < h.radius + r.radius + 0.15] = -1.0
        best = int(np.argmax(db))
        if float(db[best]) - r.radius < 0.02:
            return Twist2D()  # boxed in on all sides: hold still
        err = (cand[best] - r.pose.theta + math.pi) % (2.0 * math.pi) - math.pi
        if abs(err) > 0.3:
            return Twist2D(0.0, 0.0, 0.5 if err > 0.0 else -0.5)
        return Twist2D(-0.2, 0.0, 0.0)

    def _govern(self, cmd: Twist2D, world: World) -> Twist2D:
        """Control-level guard: scale the forward command down near walls
        and humans in the direction of motion; never drive into contact."""
        v = cmd.linear_x
        if abs(v) < 1e-9:
            return cmd
        r = world.robot
        sign = 1.0 if v > 0.0 else -1.0
        hx = sign * math.cos(r.pose.theta)
        hy = sign * math.sin(r.pose.theta)
        scale = 1.0
        # probe along the commanded arc: a turn away from a wall must not
        # be blocked by what lies straight ahead
        w = cmd.angular
        for dt_probe in (0.25, 0.5):
            th = r.pose.theta + w * dt_probe
            if abs(w) > 1e-6:
                px = r.pose.x + v / w * (math.sin(th) - math.sin(r.pose.theta))
                py = r.pose.y - v / w * (math.cos(th) - math.cos(r.pose.theta))
            else:
                px = r.pose.x + v * dt_probe * math.cos(r.pose.theta)
                py = r.pose.y + v * dt_probe * math.sin(r.pose.theta)
            d, _, _ = self._interp.value_grad(px, py)
            wall_gap = float(d) - r.radius
            if wall_gap < 0.10:
                scale = min(scale, max(0.0, wall_gap / 0.10))
        limit = float("inf")
        for h in world.humans.values():
            dx = h.pose.x - r.pose.x
            dy = h.pose.y - r.pose.y
            dist = math.hypot(dx, dy)
            if dist > 1.8 or dist < 1e-9:
                continue
            if (dx * hx + dy * hy) / dist < 0.3:
                continue  # not in the motion direction
            clear = dist - r.radius - h.radius
            # bleed speed off through the whole frontal approach, then
            # ramp to a stop just short of contact
            limit = min(limit, 0.22 + 0.28 * max(clear, 0.0))
            scale = min(scale, max(0.0, (clear - 0.05) / 0.30))
        v = math.copysign(min(abs(v), limit), v)
        if scale >= 1.0 and v == cmd.linear_x:
            return cmd
        return Twist2D(v * scale, 0.0, cmd.angular)

    @property
    def bands(self) -> BandSet | None:
        return self._bands


# ---------------------------------------------------------------------------
# traces

TRACE_COLUMNS = (
    "t,robot_x,robot_y,robot_theta,cmd_v,cmd_omega,mode,backoff_phase,"
    "min_hr_dist,wall_contact,human_contact,humans"
)


@dataclass
class TraceStep:
    t: float
    robot: Pose2D
    cmd: Twist2D
    mode: str
    backoff_phase: str
    min_hr_dist: float
    wall_contact: bool
    human_contact: bool
    humans: tuple  # ((id, Pose2D), ...) sorted by id


@dataclass
class RunTrace:
    scenario: str
    seed: int
    steps: list = field(default_factory=list)
    transitions: list = field(default_factory=list)
    completed: bool = False
    failure: str | None = None

    def collisions(self) -> bool:
        return any(s.human_contact for s in self.steps)

    def wall_contacts(self) -> bool:
        return any(s.wall_contact for s in self.steps)

    def modes_seen(self) -> list:
        seen = []
        for s in self.steps:
            if not seen or seen[-1] != s.mode:
                seen.append(s.mode)
        return seen

    def to_csv(self) -> str:
        """Stable text export: floats via repr (shortest round-trip), one
        row per step; `humans` packs id:x:y:theta with ';' separators."""
        lines = [TRACE_COLUMNS]
        for s in self.steps:
            packed = ";".join(
                f"{hid}:{float(p.x)!r}:{float(p.y)!r}:{float(p.theta)!r}"
                for hid, p in s.humans
            )
            lines.append(
                ",".join(
                    [
                        repr(round(float(s.t), 6)),
                        repr(float(s.robot.x)),
                        repr(float(s.robot.y)),
                        repr(float(s.robot.theta)),
                        repr(float(s.cmd.linear_x)),
                        repr(float(s.cmd.angular)),
                        s.mode,
                        s.backoff_phase,
                        repr(float(s.min_hr_dist)),
                        str(int(s.wall_contact)),
                        str(int(s.human_contact)),
                        packed,
                    ]
                )
            )
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scenario runner

def build_world(spec: ScenarioSpec, seed: int | None = None):
    """World + controllers for a spec; the seed jitters scripted humans."""
    from .costmap import parse_map_text

    rng = random.Random(spec.seed if seed is None else seed)
    grid = parse_map_text(spec.map_text)
    humans = {}
    controllers = {}
    for hs in spec.humans:
        humans[hs.id] = AgentState(
            hs.id, AgentKind.HUMAN, hs.start, radius=DEFAULT_HUMAN_RADIUS
        )
        controllers[hs.id] = make_controller(hs, rng)
    robot = AgentState(
        "robot", AgentKind.ROBOT, spec.robot_start, radius=DEFAULT_ROBOT_RADIUS
    )
    return World(grid=grid, robot=robot, humans=humans), controllers


def goal_reached(robot: AgentState, goal: Pose2D) -> bool:
    return (
        euclidean_distance(robot.pose, goal) <= GOAL_POS_TOL
        and abs(normalize_angle(robot.pose.theta - goal.theta)) <= GOAL_ANG_TOL
    )


def run_scenario(
    spec: ScenarioSpec,
    seed: int | None = None,
    mailboxes: dict | None = None,
    on_cycle=None,
    budget: int = 40,
) -> RunTrace:
    """Closed-loop run of one scenario. ``mailboxes`` maps External human
    ids to their controller objects for command injection; ``on_cycle`` is
    called after every control cycle with (world, session)."""
    used_seed = spec.seed if seed is None else seed
    trace = RunTrace(scenario=spec.name, seed=used_seed)
    world, controllers = build_world(spec, seed)
    for hid, ctl in controllers.items():
        if isinstance(ctl, External) and mailboxes is not None:
            mailboxes[hid] = ctl
    mode_lock = PlanningMode(spec.mode_lock) if spec.mode_lock else None
    external_goals = {
        hs.id: hs.goal for hs in spec.humans if hs.goal is not None
    }
    session = PlannerSession(
        world.grid,
        spec.robot_goal,
        prediction=spec.prediction,
        mode_lock=mode_lock,
        params=spec.params,
        budget=budget,
        external_goals=external_goals,
        goal_candidates=spec.goal_candidates,
    )
    interp = session._interp
    cmd = Twist2D()
    n_steps = int(round(spec.max_time / DT))
    try:
        for k in range(n_steps):
            if k % PLANNER_EVERY == 0:
                cmd = session.control(world)
                for hid, ctl in controllers.items():
                    if isinstance(ctl, PlannerGhost):
                        band = _human_band(session, hid)
                        if band is not None:
                            ctl.observe_band(band, session.last_band_t0)
                if on_cycle is not None:
                    on_cycle(world, session)
            moves = {
                hid: ctl.step(world, world.humans[hid], DT)
                for hid, ctl in controllers.items()
            }
            world = step(
                world, cmd, DT, limits=session.limits, interp=interp,
                human_moves=moves,
            )
            trace.steps.append(_record(world, cmd, session))
            if goal_reached(world.robot, spec.robot_goal):
                trace.completed = True
                break
    except Exception as exc:  # partial trace with failure marker
        trace.failure = f"{type(exc).__name__}: {exc}"
    trace.transitions = list(session.controller.transition_log)
    return trace


def _human_band(session: PlannerSession, hid: str):
    if session.bands is None:
        return None
    for b in session.bands.human_bands:
        if b.agent_id == hid:
            return b
    return None


def _record(world: World, cmd: Twist2D, session: PlannerSession) -> TraceStep:
    humans = tuple((h.id, h.pose) for h in world.human_list())
    dists = [
        euclidean_distance(world.robot.pose, h.pose)
        for h in world.humans.values()
    ]
    phase = session.controller.backoff_phase
    return TraceStep(
        t=world.t,
        robot=world.robot.pose,
        cmd=cmd,
        mode=session.controller.mode.value,
        backoff_phase=phase.value if phase else "",
        min_hr_dist=min(dists) if dists else math.inf,
        wall_contact=world.robot_wall_contact,
        human_contact=world.robot_human_contact,
        humans=humans,
    )


# ---------------------------------------------------------------------------
# crowd generation

def spawn_crowd(
    grid: OccupancyGrid,
    n: int,
    seed: int,
    y_range: tuple,
    x_range: tuple,
    min_gap: float = 0.9,
    retries: int = 200,
) -> list:
    """n scripted walkers on randomized straight corridor routes,
    deterministic per seed; starts pairwise separated by min_gap."""
    rng = random.Random(seed)
    specs = []
    placed = []
    for k in range(n):
        for attempt in range(retries):
            y = rng.uniform(*y_range)
            eastbound = rng.random() < 0.5
            x = rng.uniform(*x_range)
            if all(math.hypot(x - px, y - py) >= min_gap for px, py in placed):
                break
        else:
            raise RuntimeError("could not place crowd without overlap")
        placed.append((x, y))
        x_to = x_range[1] + 1.0 if eastbound else x_range[0] - 1.0
        theta = 0.0 if eastbound else math.pi
        specs.append(
            HumanSpec(
                id=f"crowd{k}",
                start=Pose2D(x, y, theta),
                controller="scripted",
                waypoints=((x_to, y),),
                speed=rng.uniform(0.9, 1.3),
                start_delay=rng.uniform(0.0, 1.5),
            )
        )
    return specs
