"""Human-aware robot navigation planner with a 2D simulation harness."""

__version__ = "0.1.0"

from .core import (
    Activity,
    AgentKind,
    AgentState,
    HumanActivity,
    Pose2D,
    Twist2D,
    classify_activity,
    euclidean_distance,
    normalize_angle,
)

__all__ = [
    "Activity",
    "AgentKind",
    "AgentState",
    "HumanActivity",
    "Pose2D",
    "Twist2D",
    "classify_activity",
    "euclidean_distance",
    "normalize_angle",
]
