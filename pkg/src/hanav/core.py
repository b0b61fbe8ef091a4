"""Core geometric and agent types shared by every other module."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

TWO_PI = 2.0 * math.pi

# Static/dynamic classification defaults: below V_STATIC for a full window
# of control cycles means "standing still" (1 s at 10 Hz).
V_STATIC = 0.1
CLASSIFY_WINDOW = 10

DEFAULT_HUMAN_RADIUS = 0.3
DEFAULT_ROBOT_RADIUS = 0.35


def normalize_angle(theta: float) -> float:
    """Reduce an angle into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"non-finite angle: {theta!r}")
    wrapped = theta % TWO_PI  # in [0, 2*pi)
    if wrapped > math.pi:
        wrapped -= TWO_PI
    # theta = -pi wraps to pi by convention (half-open interval)
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; theta kept normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def heading_vector(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)


@dataclass(frozen=True)
class Twist2D:
    """Planar velocity command/state. linear_y stays 0 for the robot."""

    linear_x: float = 0.0
    linear_y: float = 0.0
    angular: float = 0.0

    def speed(self) -> float:
        return math.hypot(self.linear_x, self.linear_y)


class AgentKind(enum.Enum):
    ROBOT = "robot"
    HUMAN = "human"


class Activity(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class HumanActivity:
    value: Activity
    since: float = 0.0  # sim seconds the verdict has held


@dataclass(frozen=True)
class AgentState:
    id: str
    kind: AgentKind
    pose: Pose2D
    velocity: Twist2D = field(default_factory=Twist2D)
    radius: float = DEFAULT_HUMAN_RADIUS

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("agent radius must be positive")

    def with_pose(self, pose: Pose2D, velocity: Twist2D | None = None) -> AgentState:
        return replace(self, pose=pose, velocity=velocity or self.velocity)


def classify_activity(
    speed_history: list[float],
    v_static: float = V_STATIC,
    window: int = CLASSIFY_WINDOW,
    held_for: float = 0.0,
) -> HumanActivity:
    """Classify a human as static/dynamic from its recent speed samples.

    Static requires every sample of a full window below ``v_static``; any
    sample at or above it makes the human dynamic. Less than a full window
    of history yields Unknown.
    """
    recent = speed_history[-window:]
    if any(s < 0.0 for s in recent):
        raise ValueError("negative speed sample")
    if any(s >= v_static for s in recent):
        # movement is immediate evidence; only Static needs a full window
        return HumanActivity(Activity.DYNAMIC, held_for)
    if len(recent) < window:
        return HumanActivity(Activity.UNKNOWN, held_for)
    return HumanActivity(Activity.STATIC, held_for)


def euclidean_distance(a: Pose2D, b: Pose2D) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
