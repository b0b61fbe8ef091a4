"""Residual terms of the band optimization and their analytic Jacobians.

Every term is a group of scalar residuals over the stacked parameter
vector (interior band poses + time deltas). The objective minimized is
sum over groups of weight * ||r||^2; groups expose residuals and a dense
Jacobian so the solver stays agnostic of the term semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AgentState, Pose2D, normalize_angle
from .band import DT_MIN, KinodynamicLimits, TimedBand


def _normalize_angles(arr: np.ndarray) -> np.ndarray:
    wrapped = np.mod(arr, 2.0 * np.pi)
    wrapped[wrapped > np.pi] -= 2.0 * np.pi
    return wrapped

EPS_SPEED = 1e-9
D_MIN_SEPARATION = 0.1  # m, singular-separation clamp for the relative-velocity cost
CLEARANCE_MARGIN = 0.1  # m beyond the footprint radius kept free of obstacles


# ---------------------------------------------------------------------------
# standalone cost functions (also used outside the optimizer)

def rel_vel_cost(robot: AgentState, human: AgentState, d_min: float = D_MIN_SEPARATION,
                 normalized_direction: bool = False) -> float:
    """Relative-velocity cost between a robot and a human state.

    (max(V_rel . P_rP_h, 0) + |V_r| + 1) / |P_rP_h|, with P_rP_h the vector
    from robot to human, used unnormalized unless ``normalized_direction``.
    """
    return _rel_vel_scalar(
        np.array([robot.pose.x, robot.pose.y]),
        np.array([robot.velocity.linear_x, robot.velocity.linear_y]),
        np.array([human.pose.x, human.pose.y]),
        np.array([human.velocity.linear_x, human.velocity.linear_y]),
        d_min,
        normalized_direction,
    )[0]


def _rel_vel_scalar(pr, vr, ph, vh, d_min, normalized_direction):
    d = ph - pr
    n = float(np.hypot(*d))
    clamped = n < d_min
    n_eff = max(n, d_min)
    direction = d / n if (normalized_direction and n > 0.0) else d
    dot = float((vr - vh) @ direction)
    cost = (max(dot, 0.0) + float(np.hypot(*vr)) + 1.0) / n_eff
    return cost, clamped


def visibility_cost(
    robot_pose: Pose2D,
    human: AgentState,
    amplitude: float = 0.9,
    sigma: float = 1.0,
    cutoff: float = 3.0,
) -> float:
    """Half-Gaussian cost when the (planned) robot pose is strictly behind
    the human and inside the cutoff radius."""
    dx = robot_pose.x - human.pose.x
    dy = robot_pose.y - human.pose.y
    r2 = dx * dx + dy * dy
    if r2 > cutoff * cutoff:
        return 0.0
    hx, hy = human.pose.heading_vector()
    if dx * hx + dy * hy >= 0.0 and r2 > 1e-12:
        return 0.0
    return amplitude * math.exp(-r2 / (2.0 * sigma * sigma))


def safety_cost(robot_pose: Pose2D, human_pose: Pose2D, d_safe: float) -> float:
    """Quadratic penalty on planned separation below d_safe."""
    d = math.hypot(robot_pose.x - human_pose.x, robot_pose.y - human_pose.y)
    return max(0.0, d_safe - d) ** 2


def kinodynamic_residuals(band: TimedBand, limits: KinodynamicLimits,
                          v_start: float = 0.0, v_end: float = 0.0) -> np.ndarray:
    """All kinodynamic residuals of a band stacked into one vector."""
    vars_ = BandVars(band, 0)
    groups = [
        VelocityGroup(vars_, limits, 1.0),
        AccelGroup(vars_, limits, 1.0, v_start=v_start, v_end=v_end),
    ]
    if limits.nonholonomic:
        groups.append(NonholoGroup(vars_, 1.0))
    return np.concatenate([g.residuals() for g in groups])


# ---------------------------------------------------------------------------
# parameter bookkeeping

class BandVars:
    """Maps one band's free variables into the global parameter vector.

    Free variables: poses 1..n-2 (x, y, theta) then all n-1 time deltas.
    Endpoint poses are fixed (column -1).  With ``fix_dt`` the time deltas
    are fixed too: the band's schedule is kept, only its path can move.
    """

    def __init__(self, band: TimedBand, offset: int, fix_dt: bool = False):
        self.band = band
        self.offset = offset
        self.n = band.n
        self.fix_dt = fix_dt

    @property
    def ncols(self) -> int:
        return 3 * (self.n - 2) + (0 if self.fix_dt else self.n - 1)

    def pose_col(self, i, c):
        """Column of pose i's coordinate c; -1 when fixed. Vectorized."""
        i = np.asarray(i)
        col = self.offset + 3 * (i - 1) + c
        return np.where((i >= 1) & (i <= self.n - 2), col, -1)

    def dt_col(self, i):
        i = np.asarray(i)
        if self.fix_dt:
            return np.full(i.shape, -1, dtype=int)
        return self.offset + 3 * (self.n - 2) + i

    def get(self) -> np.ndarray:
        if self.fix_dt:
            return self.band.poses[1:-1].ravel().copy()
        return np.concatenate(
            [self.band.poses[1:-1].ravel(), self.band.time_deltas]
        )

    def set(self, x: np.ndarray) -> None:
        n_pose = 3 * (self.n - 2)
        sl = x[self.offset : self.offset + self.ncols]
        if self.n > 2:
            self.band.poses[1:-1] = sl[:n_pose].reshape(-1, 3)
            self.band.poses[1:-1, 2] = _normalize_angles(self.band.poses[1:-1, 2])
        if not self.fix_dt:
            self.band.time_deltas = np.maximum(sl[n_pose:], DT_MIN)


def scatter(J: np.ndarray, rows, cols, vals) -> None:
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    vals = np.asarray(vals, dtype=float)
    keep = cols >= 0
    np.add.at(J, (rows[keep], cols[keep]), vals[keep])


# ---------------------------------------------------------------------------
# residual groups

class Group:
    name = "group"

    def __init__(self, weight: float):
        self.weight = weight

    def size(self) -> int:
        raise NotImplementedError

    def residuals(self) -> np.ndarray:
        raise NotImplementedError

    def fill_jacobian(self, J: np.ndarray, row0: int) -> None:
        raise NotImplementedError


def _segments(band: TimedBand):
    p = band.poses
    d = np.diff(p[:, :2], axis=0)
    dth = np.array([normalize_angle(t) for t in np.diff(p[:, 2])])
    length = np.linalg.norm(d, axis=1)
    return d, dth, length


class TimeGroup(Group):
    """Time optimality: one residual per time delta."""

    name = "time"

    def __init__(self, bv: BandVars, weight: float):
        super().__init__(weight)
        self.bv = bv

    def size(self):
        return self.bv.n - 1

    def residuals(self):
        return self.bv.band.time_deltas.copy()

    def fill_jacobian(self, J, row0):
        m = self.size()
        rows = row0 + np.arange(m)
        scatter(J, rows, self.bv.dt_col(np.arange(m)), np.ones(m))


class VelocityGroup(Group):
    """Per-segment translational and angular speed limit penalties."""

    name = "kinodynamic"

    def __init__(self, bv: BandVars, limits: KinodynamicLimits, weight: float):
        super().__init__(weight)
        self.bv = bv
        self.limits = limits

    def size(self):
        return 2 * (self.bv.n - 1)

    def _terms(self):
        band = self.bv.band
        d, dth, length = _segments(band)
        dt = band.time_deltas
        v = length / dt
        w = dth / dt
        return d, dth, length, dt, v, w

    def residuals(self):
        _, _, _, _, v, w = self._terms()
        r_lin = np.maximum(0.0, v - self.limits.v_max)
        r_ang = np.maximum(0.0, np.abs(w) - self.limits.omega_max)
        return np.concatenate([r_lin, r_ang])

    def fill_jacobian(self, J, row0):
        d, dth, length, dt, v, w = self._terms()
        m = self.bv.n - 1
        idx = np.arange(m)
        act = v > self.limits.v_max
        safe_len = np.where(length > 1e-12, length, 1.0)
        ux = np.where(act, d[:, 0] / safe_len, 0.0)
        uy = np.where(act, d[:, 1] / safe_len, 0.0)
        rows = row0 + idx
        scatter(J, rows, self.bv.pose_col(idx, 0), -ux / dt)
        scatter(J, rows, self.bv.pose_col(idx, 1), -uy / dt)
        scatter(J, rows, self.bv.pose_col(idx + 1, 0), ux / dt)
        scatter(J, rows, self.bv.pose_col(idx + 1, 1), uy / dt)
        scatter(J, rows, self.bv.dt_col(idx), np.where(act, -length / dt**2, 0.0))
        act_a = np.abs(w) > self.limits.omega_max
        s = np.where(act_a, np.sign(w), 0.0)
        rows = row0 + m + idx
        scatter(J, rows, self.bv.pose_col(idx, 2), -s / dt)
        scatter(J, rows, self.bv.pose_col(idx + 1, 2), s / dt)
        scatter(J, rows, self.bv.dt_col(idx), -s * dth / dt**2)


class AccelGroup(Group):
    """Acceleration limit penalties, anchored at the boundary speeds."""

    name = "kinodynamic"

    def __init__(self, bv: BandVars, limits: KinodynamicLimits, weight: float,
                 v_start: float = 0.0, v_end: float = 0.0):
        super().__init__(weight)
        self.bv = bv
        self.limits = limits
        self.v_start = v_start
        self.v_end = v_end

    def size(self):
        return (self.bv.n - 2) + 2

    def _terms(self):
        band = self.bv.band
        d, _, length = _segments(band)
        dt = band.time_deltas
        v = length / dt
        return d, length, dt, v

    def _accels(self):
        d, length, dt, v = self._terms()
        # segment speeds live at segment midpoints, boundary speeds at the
        # band endpoints: every accel is a midpoint-rule finite difference
        a_int = 2.0 * np.diff(v) / (dt[:-1] + dt[1:])
        a_start = 2.0 * (v[0] - self.v_start) / dt[0]
        a_end = 2.0 * (self.v_end - v[-1]) / dt[-1]
        return np.concatenate([[a_start], a_int, [a_end]])

    def residuals(self):
        return np.maximum(0.0, np.abs(self._accels()) - self.limits.a_max)

    def fill_jacobian(self, J, row0):
        d, length, dt, v = self._terms()
        nseg = len(dt)
        a = self._accels()
        act = np.abs(a) > self.limits.a_max
        s = np.where(act, np.sign(a), 0.0)
        safe_len = np.where(length > 1e-12, length, 1.0)
        ux, uy = d[:, 0] / safe_len, d[:, 1] / safe_len

        def dv_cols(seg):
            """Columns and partials of v_seg wrt its variables."""
            return [
                (self.bv.pose_col(seg, 0), -ux[seg] / dt[seg]),
                (self.bv.pose_col(seg, 1), -uy[seg] / dt[seg]),
                (self.bv.pose_col(seg + 1, 0), ux[seg] / dt[seg]),
                (self.bv.pose_col(seg + 1, 1), uy[seg] / dt[seg]),
            ]

        # start boundary: a = 2(v0 - v_start)/dt0
        r = row0
        for col, dv in dv_cols(0):
            scatter(J, [r], [col], [s[0] * 2.0 * dv / dt[0]])
        dA_ddt0 = 2.0 * (
            -(v[0] - self.v_start) / dt[0] ** 2 - length[0] / dt[0] ** 3
        )
        scatter(J, [r], [self.bv.dt_col(0)], [s[0] * dA_ddt0])
        # interior: a_i = 2(v_{i+1}-v_i)/(dt_i+dt_{i+1})
        for k in range(nseg - 1):
            r = row0 + 1 + k
            D = dt[k] + dt[k + 1]
            coef = s[k + 1]
            for col, dv in dv_cols(k + 1):
                scatter(J, [r], [col], [coef * 2.0 * dv / D])
            for col, dv in dv_cols(k):
                scatter(J, [r], [col], [coef * -2.0 * dv / D])
            dA_ddtk = -2.0 * (v[k + 1] - v[k]) / D**2 + (2.0 / D) * (length[k] / dt[k] ** 2)
            dA_ddtk1 = -2.0 * (v[k + 1] - v[k]) / D**2 - (2.0 / D) * (length[k + 1] / dt[k + 1] ** 2)
            scatter(J, [r], [self.bv.dt_col(k)], [coef * dA_ddtk])
            scatter(J, [r], [self.bv.dt_col(k + 1)], [coef * dA_ddtk1])
        # end boundary: a = 2(v_end - v_last)/dt_last
        r = row0 + nseg
        last = nseg - 1
        for col, dv in dv_cols(last):
            scatter(J, [r], [col], [s[-1] * -2.0 * dv / dt[last]])
        dA_ddt = 2.0 * (
            -(self.v_end - v[last]) / dt[last] ** 2
            + length[last] / dt[last] ** 3
        )
        scatter(J, [r], [self.bv.dt_col(last)], [s[-1] * dA_ddt])


class NonholoGroup(Group):
    """Lateral-slip penalty per segment in the average-heading frame."""

    name = "kinodynamic"

    def __init__(self, bv: BandVars, weight: float):
        super().__init__(weight)
        self.bv = bv

    def size(self):
        return self.bv.n - 1

    def _terms(self):
        band = self.bv.band
        d, dth, _ = _segments(band)
        h = band.poses[:-1, 2] + 0.5 * dth
        return d, h

    def residuals(self):
        d, h = self._terms()
        return -np.sin(h) * d[:, 0] + np.cos(h) * d[:, 1]

    def fill_jacobian(self, J, row0):
        d, h = self._terms()
        m = self.bv.n - 1
        idx = np.arange(m)
        rows = row0 + idx
        sin_h, cos_h = np.sin(h), np.cos(h)
        dr_dh = -cos_h * d[:, 0] - sin_h * d[:, 1]
        scatter(J, rows, self.bv.pose_col(idx, 0), sin_h)
        scatter(J, rows, self.bv.pose_col(idx + 1, 0), -sin_h)
        scatter(J, rows, self.bv.pose_col(idx, 1), -cos_h)
        scatter(J, rows, self.bv.pose_col(idx + 1, 1), cos_h)
        scatter(J, rows, self.bv.pose_col(idx, 2), 0.5 * dr_dh)
        scatter(J, rows, self.bv.pose_col(idx + 1, 2), 0.5 * dr_dh)


class FieldInterpolator:
    """Bilinear interpolation (with gradient) of a scalar field sampled at
    cell centers of a grid."""

    def __init__(self, field: np.ndarray, origin_x: float, origin_y: float,
                 resolution: float):
        self.field = field
        self.ox = origin_x
        self.oy = origin_y
        self.res = resolution

    def value_grad(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        h, w = self.field.shape
        u = (x - self.ox) / self.res - 0.5
        v = (y - self.oy) / self.res - 0.5
        i0 = np.clip(np.floor(u).astype(int), 0, w - 2)
        j0 = np.clip(np.floor(v).astype(int), 0, h - 2)
        fu = np.clip(u - i0, 0.0, 1.0)
        fv = np.clip(v - j0, 0.0, 1.0)
        f00 = self.field[j0, i0]
        f10 = self.field[j0, i0 + 1]
        f01 = self.field[j0 + 1, i0]
        f11 = self.field[j0 + 1, i0 + 1]
        val = (
            f00 * (1 - fu) * (1 - fv)
            + f10 * fu * (1 - fv)
            + f01 * (1 - fu) * fv
            + f11 * fu * fv
        )
        dval_dx = ((f10 - f00) * (1 - fv) + (f11 - f01) * fv) / self.res
        dval_dy = ((f01 - f00) * (1 - fu) + (f11 - f10) * fu) / self.res
        return val, dval_dx, dval_dy


class ObstacleGroup(Group):
    """Clearance penalty: residual when the interpolated obstacle distance
    drops below footprint radius + margin.  Segment midpoints are penalized
    too, so a sparse band cannot cut corners between its poses."""

    name = "obstacle"

    def __init__(self, bv: BandVars, interp: FieldInterpolator, clearance: float,
                 weight: float):
        super().__init__(weight)
        self.bv = bv
        self.interp = interp
        self.clearance = clearance
        self.idx = np.arange(1, bv.n - 1)
        self.seg = np.arange(0, bv.n - 1)

    def size(self):
        return len(self.idx) + len(self.seg)

    def _points(self):
        poses = self.bv.band.poses
        mids = 0.5 * (poses[self.seg, :2] + poses[self.seg + 1, :2])
        return np.vstack([poses[self.idx, :2], mids])

    def residuals(self):
        p = self._points()
        d, _, _ = self.interp.value_grad(p[:, 0], p[:, 1])
        return np.maximum(0.0, self.clearance - d)

    def fill_jacobian(self, J, row0):
        p = self._points()
        d, gx, gy = self.interp.value_grad(p[:, 0], p[:, 1])
        act = d < self.clearance
        gx = np.where(act, -gx, 0.0)
        gy = np.where(act, -gy, 0.0)
        n_pose = len(self.idx)
        rows = row0 + np.arange(n_pose)
        scatter(J, rows, self.bv.pose_col(self.idx, 0), gx[:n_pose])
        scatter(J, rows, self.bv.pose_col(self.idx, 1), gy[:n_pose])
        rows = row0 + n_pose + np.arange(len(self.seg))
        for ends in (self.seg, self.seg + 1):
            scatter(J, rows, self.bv.pose_col(ends, 0), 0.5 * gx[n_pose:])
            scatter(J, rows, self.bv.pose_col(ends, 1), 0.5 * gy[n_pose:])


class ViaGroup(Group):
    """Adherence to via points sampled from the global path."""

    name = "viapoint"

    def __init__(self, bv: BandVars, via_xy: np.ndarray, assign: np.ndarray,
                 weight: float):
        super().__init__(weight)
        self.bv = bv
        self.via = np.asarray(via_xy, dtype=float).reshape(-1, 2)
        self.assign = np.asarray(assign, dtype=int)
        if self.assign.size == 0:
            self.via = self.via[:0]  # band has no interior poses to attract

    def size(self):
        return 2 * len(self.via)

    def residuals(self):
        p = self.bv.band.poses[self.assign, :2]
        return (p - self.via).ravel()

    def fill_jacobian(self, J, row0):
        m = len(self.via)
        rows = row0 + 2 * np.arange(m)
        scatter(J, rows, self.bv.pose_col(self.assign, 0), np.ones(m))
        scatter(J, rows + 1, self.bv.pose_col(self.assign, 1), np.ones(m))


# ---------------------------------------------------------------------------
# human targets for pairwise (robot x human) residuals

class HumanTarget:
    """Time-aligned human sample used by pairwise residual groups.

    Alignment (segment index / interpolation weight) is frozen when the
    target is built, so each group is a smooth function of the remaining
    variables within one solver iteration.
    """

    def __init__(self, human_id: str):
        self.human_id = human_id

    def sample(self, times: np.ndarray):
        """Returns (pos (m,2), vel (m,2), heading (m,))."""
        raise NotImplementedError

    def jacobian_chain(self, J, rows, dr_dpos, dr_dvel):
        """Propagate d(residual)/d(human pos/vel) into band variables.
        No-op for fixed targets."""


class FixedTarget(HumanTarget):
    """Static human or plan-followed human: trajectory is data."""

    def __init__(self, human_id: str, sampler):
        super().__init__(human_id)
        self._sampler = sampler

    @classmethod
    def from_state(cls, state: AgentState):
        pos = np.array([state.pose.x, state.pose.y])
        vel = np.array([state.velocity.linear_x, state.velocity.linear_y])
        heading = state.pose.theta

        def sampler(times):
            t = np.asarray(times, dtype=float)[:, None]
            return pos + vel * t, np.tile(vel, (len(t), 1)), np.full(len(t), heading)

        return cls(state.id, sampler)

    @classmethod
    def from_plan(cls, plan):
        def sampler(times):
            pos = np.empty((len(times), 2))
            vel = np.empty((len(times), 2))
            heading = np.empty(len(times))
            wps = plan.waypoints
            for k, t in enumerate(times):
                p = plan.pose_at(t)
                pos[k] = [p.x, p.y]
                heading[k] = p.theta
                # finite-difference velocity along the plan
                t2 = min(t + 0.2, wps[-1][1])
                t1 = max(t2 - 0.2, 0.0)
                if t2 > t1:
                    pa, pb = plan.pose_at(t1), plan.pose_at(t2)
                    vel[k] = [(pb.x - pa.x) / (t2 - t1), (pb.y - pa.y) / (t2 - t1)]
                else:
                    vel[k] = 0.0
            return pos, vel, heading

        return cls(plan.human_id, sampler)

    def sample(self, times):
        return self._sampler(np.asarray(times, dtype=float))


class BandTarget(HumanTarget):
    """Human with its own elastic band: samples are interpolated band poses
    and carry Jacobian entries into the human band variables."""

    def __init__(self, bv: BandVars):
        super().__init__(bv.band.agent_id)
        self.bv = bv

    def freeze(self, times: np.ndarray):
        band = self.bv.band
        ts = band.timestamps()
        times = np.asarray(times, dtype=float)
        j = np.clip(np.searchsorted(ts, times, side="right") - 1, 0, band.n - 2)
        dt = band.time_deltas[j]
        u = np.clip((times - ts[j]) / dt, 0.0, 1.0)
        beyond = times >= ts[-1]
        self.j = j
        self.u = u
        self.beyond = beyond
        return self

    def sample(self, times):
        band = self.bv.band
        a = band.poses[self.j]
        b = band.poses[self.j + 1]
        u = self.u[:, None]
        pos = a[:, :2] + u * (b[:, :2] - a[:, :2])
        dt = band.time_deltas[self.j][:, None]
        vel = np.where(self.beyond[:, None], 0.0, (b[:, :2] - a[:, :2]) / dt)
        heading = a[:, 2]
        return pos, vel, heading

    def jacobian_chain(self, J, rows, dr_dpos, dr_dvel):
        j = self.j
        u = self.u
        dt = self.bv.band.time_deltas[j]
        live = ~self.beyond
        for c in (0, 1):
            # position interpolation: p = (1-u) a + u b
            scatter(J, rows, self.bv.pose_col(j, c), dr_dpos[:, c] * (1.0 - u))
            scatter(J, rows, self.bv.pose_col(j + 1, c), dr_dpos[:, c] * u)
            # velocity: v = (b - a)/dt
            dv = np.where(live, dr_dvel[:, c] / dt, 0.0)
            scatter(J, rows, self.bv.pose_col(j, c), -dv)
            scatter(J, rows, self.bv.pose_col(j + 1, c), dv)
        delta = self.bv.band.poses[j + 1, :2] - self.bv.band.poses[j, :2]
        ddt = np.where(
            live,
            -(dr_dvel[:, 0] * delta[:, 0] + dr_dvel[:, 1] * delta[:, 1]) / dt**2,
            0.0,
        )
        scatter(J, rows, self.bv.dt_col(j), ddt)


class SafetyGroup(Group):
    """Separation penalty between time-aligned robot and human poses."""

    name = "safety"

    def __init__(self, bv_r: BandVars, target: HumanTarget, d_safe: float,
                 weight: float):
        super().__init__(weight)
        self.bv = bv_r
        self.target = target
        self.d_safe = d_safe
        self.idx = np.arange(1, bv_r.n - 1)
        self.times = bv_r.band.timestamps()[self.idx]

    def size(self):
        return len(self.idx)

    def _terms(self):
        pr = self.bv.band.poses[self.idx, :2]
        ph, _, _ = self.target.sample(self.times)
        d = pr - ph
        dist = np.linalg.norm(d, axis=1)
        return d, dist

    def residuals(self):
        _, dist = self._terms()
        return np.maximum(0.0, self.d_safe - dist)

    def fill_jacobian(self, J, row0):
        d, dist = self._terms()
        act = dist < self.d_safe
        safe = np.where(dist > 1e-12, dist, 1.0)
        g = np.where(act[:, None], -d / safe[:, None], 0.0)  # dr/d(pr)
        rows = row0 + np.arange(len(self.idx))
        scatter(J, rows, self.bv.pose_col(self.idx, 0), g[:, 0])
        scatter(J, rows, self.bv.pose_col(self.idx, 1), g[:, 1])
        self.target.jacobian_chain(J, rows, -g, np.zeros_like(g))


class VisibilityGroup(Group):
    """Half-Gaussian penalty when planned robot poses sit behind a human."""

    name = "visibility"

    def __init__(self, bv_r: BandVars, target: HumanTarget, amplitude: float,
                 sigma: float, cutoff: float, weight: float):
        super().__init__(weight)
        self.bv = bv_r
        self.target = target
        self.amplitude = amplitude
        self.sigma = sigma
        self.cutoff = cutoff
        self.idx = np.arange(1, bv_r.n - 1)
        self.times = bv_r.band.timestamps()[self.idx]

    def size(self):
        return len(self.idx)

    def _terms(self):
        pr = self.bv.band.poses[self.idx, :2]
        ph, _, heading = self.target.sample(self.times)
        d = pr - ph
        r2 = np.sum(d * d, axis=1)
        behind = (
            (d[:, 0] * np.cos(heading) + d[:, 1] * np.sin(heading)) < 0.0
        ) & (r2 <= self.cutoff**2)
        val = np.where(
            behind, self.amplitude * np.exp(-r2 / (2.0 * self.sigma**2)), 0.0
        )
        return d, behind, val

    def residuals(self):
        return self._terms()[2]

    def fill_jacobian(self, J, row0):
        d, behind, val = self._terms()
        g = np.where(behind[:, None], -val[:, None] * d / self.sigma**2, 0.0)
        rows = row0 + np.arange(len(self.idx))
        scatter(J, rows, self.bv.pose_col(self.idx, 0), g[:, 0])
        scatter(J, rows, self.bv.pose_col(self.idx, 1), g[:, 1])
        self.target.jacobian_chain(J, rows, -g, np.zeros_like(g))


class RelVelGroup(Group):
    """Relative-velocity cost evaluated at time-aligned planned states."""

    name = "rel_vel"

    def __init__(self, bv_r: BandVars, target: HumanTarget, weight: float,
                 d_min: float = D_MIN_SEPARATION):
        super().__init__(weight)
        self.bv = bv_r
        self.target = target
        self.d_min = d_min
        # one residual per robot segment start, skipping the fixed first pose
        self.idx = np.arange(1, bv_r.n - 1)
        self.times = bv_r.band.timestamps()[self.idx]

    def size(self):
        return len(self.idx)

    def _terms(self):
        band = self.bv.band
        i = self.idx
        pr = band.poses[i, :2]
        delta = band.poses[i + 1, :2] - pr
        dt = band.time_deltas[i]
        vr = delta / dt[:, None]
        ph, vh, _ = self.target.sample(self.times)
        D = ph - pr
        n = np.linalg.norm(D, axis=1)
        clamped = n < self.d_min
        n_eff = np.maximum(n, self.d_min)
        vrel = vr - vh
        a = np.sum(vrel * D, axis=1)
        s = np.linalg.norm(vr, axis=1)
        r = (np.maximum(a, 0.0) + s + 1.0) / n_eff
        return pr, delta, dt, vr, ph, vh, D, n, clamped, n_eff, vrel, a, s, r

    def residuals(self):
        return self._terms()[-1]

    def fill_jacobian(self, J, row0):
        (pr, delta, dt, vr, ph, vh, D, n, clamped, n_eff, vrel, a, s,
         r) = self._terms()
        m = len(self.idx)
        rows = row0 + np.arange(m)
        pos_dot = (a > 0.0).astype(float)
        safe_s = np.maximum(s, EPS_SPEED)
        # partials of r wrt the intermediate quantities
        dr_dvr = (pos_dot[:, None] * D + vr / safe_s[:, None]) / n_eff[:, None]
        dr_dvh = -pos_dot[:, None] * D / n_eff[:, None]
        dr_dD = pos_dot[:, None] * vrel / n_eff[:, None]
        free = ~clamped
        dr_dD += np.where(
            free[:, None], -(r / n_eff)[:, None] * D / np.maximum(n, 1e-12)[:, None], 0.0
        )
        # chain to robot variables: pr enters D (negatively) and vr via delta
        dpose_i = -dr_dD - dr_dvr / dt[:, None]
        dpose_i1 = dr_dvr / dt[:, None]
        ddt = -np.sum(dr_dvr * delta, axis=1) / dt**2
        scatter(J, rows, self.bv.pose_col(self.idx, 0), dpose_i[:, 0])
        scatter(J, rows, self.bv.pose_col(self.idx, 1), dpose_i[:, 1])
        scatter(J, rows, self.bv.pose_col(self.idx + 1, 0), dpose_i1[:, 0])
        scatter(J, rows, self.bv.pose_col(self.idx + 1, 1), dpose_i1[:, 1])
        scatter(J, rows, self.bv.dt_col(self.idx), ddt)
        self.target.jacobian_chain(J, rows, dr_dD, dr_dvh)
