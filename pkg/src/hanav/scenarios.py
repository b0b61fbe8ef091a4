"""Scenario file format and the bundled scenario library.

A scenario file is line-oriented key-value text with nested human blocks:

    name door_crossing
    map door_room.map
    prediction PredictBehind
    seed 0
    max_time 60
    robot_start 1.5 4.0 0.0
    robot_goal 11.0 4.9 0.0
    goal_candidate 1.5 4.0
    human h1
      controller scripted
      start 8.0 4.0 3.141593
      speed 1.2
      waypoint 1.5 4.0
    end

Map references are file names resolved against the bundled maps directory
(or the directory of the scenario file itself).
"""

from __future__ import annotations

import math
from pathlib import Path

from .core import Pose2D
from .prediction import PredictionMethod
from .simulator import HumanSpec, ScenarioSpec

MAPS_DIR = Path(__file__).parent / "maps"
SCENARIOS_DIR = Path(__file__).parent / "scenarios"


class ScenarioFormatError(ValueError):
    pass


def _pose(parts: list, what: str) -> Pose2D:
    if len(parts) not in (2, 3):
        raise ScenarioFormatError(f"{what} needs 2 or 3 numbers")
    vals = [float(p) for p in parts]
    return Pose2D(vals[0], vals[1], vals[2] if len(vals) == 3 else 0.0)


def parse_scenario_text(text: str, maps_dir=None) -> ScenarioSpec:
    maps_dir = Path(maps_dir) if maps_dir is not None else MAPS_DIR
    fields: dict = {"goal_candidates": [], "humans": []}
    current: dict | None = None  # open human block
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, *parts = line.split()
        if current is not None:
            if key == "end":
                fields["humans"].append(_finish_human(current, ln))
                current = None
            elif key == "controller":
                current["controller"] = parts[0]
            elif key == "start":
                current["start"] = _pose(parts, "human start")
            elif key == "goal":
                current["goal"] = _pose(parts, "human goal")
            elif key == "waypoint":
                current.setdefault("waypoints", []).append(
                    (float(parts[0]), float(parts[1]))
                )
            elif key == "speed":
                current["speed"] = float(parts[0])
            elif key == "start_delay":
                current["start_delay"] = float(parts[0])
            elif key == "velocity":
                current["velocity"] = (float(parts[0]), float(parts[1]))
            elif key == "yields":
                current["yields"] = parts[0].lower() in ("1", "true", "yes")
            else:
                raise ScenarioFormatError(f"line {ln}: unknown human key {key!r}")
            continue
        if key == "human":
            if not parts:
                raise ScenarioFormatError(f"line {ln}: human block needs an id")
            current = {"id": parts[0]}
        elif key == "name":
            fields["name"] = parts[0]
        elif key == "map":
            fields["map"] = parts[0]
        elif key == "prediction":
            fields["prediction"] = PredictionMethod(parts[0])
        elif key == "mode_lock":
            fields["mode_lock"] = parts[0]
        elif key == "seed":
            fields["seed"] = int(parts[0])
        elif key == "max_time":
            fields["max_time"] = float(parts[0])
        elif key == "robot_start":
            fields["robot_start"] = _pose(parts, "robot_start")
        elif key == "robot_goal":
            fields["robot_goal"] = _pose(parts, "robot_goal")
        elif key == "goal_candidate":
            fields["goal_candidates"].append((float(parts[0]), float(parts[1])))
        else:
            raise ScenarioFormatError(f"line {ln}: unknown key {key!r}")
    if current is not None:
        raise ScenarioFormatError("unterminated human block")
    for req in ("name", "map", "robot_start", "robot_goal"):
        if req not in fields:
            raise ScenarioFormatError(f"missing required key {req!r}")
    map_path = maps_dir / fields["map"]
    if not map_path.exists():
        raise ScenarioFormatError(f"map file not found: {map_path}")
    return ScenarioSpec(
        name=fields["name"],
        map_text=map_path.read_text(),
        robot_start=fields["robot_start"],
        robot_goal=fields["robot_goal"],
        humans=tuple(fields["humans"]),
        prediction=fields.get("prediction", PredictionMethod.BEHIND),
        goal_candidates=tuple(fields["goal_candidates"]),
        mode_lock=fields.get("mode_lock"),
        seed=fields.get("seed", 0),
        max_time=fields.get("max_time", 60.0),
    )


def _finish_human(block: dict, ln: int) -> HumanSpec:
    if "controller" not in block or "start" not in block:
        raise ScenarioFormatError(
            f"line {ln}: human {block.get('id')!r} needs controller and start"
        )
    return HumanSpec(
        id=block["id"],
        start=block["start"],
        controller=block["controller"],
        waypoints=tuple(block.get("waypoints", ())),
        speed=block.get("speed", 1.2),
        start_delay=block.get("start_delay", 0.0),
        velocity=block.get("velocity", (0.0, 0.0)),
        goal=block.get("goal"),
        yields=block.get("yields", True),
    )


def serialize_scenario_text(spec: ScenarioSpec, map_name: str) -> str:
    """Inverse of parse (map content is referenced by name, not embedded)."""
    lines = [
        f"name {spec.name}",
        f"map {map_name}",
        f"prediction {spec.prediction.value}",
        f"seed {spec.seed}",
        f"max_time {spec.max_time:g}",
        f"robot_start {spec.robot_start.x:g} {spec.robot_start.y:g} "
        f"{spec.robot_start.theta:g}",
        f"robot_goal {spec.robot_goal.x:g} {spec.robot_goal.y:g} "
        f"{spec.robot_goal.theta:g}",
    ]
    if spec.mode_lock:
        lines.append(f"mode_lock {spec.mode_lock}")
    for x, y in spec.goal_candidates:
        lines.append(f"goal_candidate {x:g} {y:g}")
    for h in spec.humans:
        lines.append(f"human {h.id}")
        lines.append(f"  controller {h.controller}")
        lines.append(f"  start {h.start.x:g} {h.start.y:g} {h.start.theta:g}")
        if h.controller == "scripted":
            lines.append(f"  speed {h.speed:g}")
            if h.start_delay:
                lines.append(f"  start_delay {h.start_delay:g}")
            lines.append(f"  yields {'true' if h.yields else 'false'}")
            for x, y in h.waypoints:
                lines.append(f"  waypoint {x:g} {y:g}")
        elif h.controller == "constant":
            lines.append(f"  velocity {h.velocity[0]:g} {h.velocity[1]:g}")
        if h.goal is not None:
            lines.append(f"  goal {h.goal.x:g} {h.goal.y:g} {h.goal.theta:g}")
        lines.append("end")
    return "\n".join(lines) + "\n"


SCENARIO_NAMES = (
    "door_crossing",
    "door_crossing_static_facing",
    "door_crossing_static_away",
    "narrow_corridor",
    "pillar_corridor",
    "wide_corridor",
    "open_space",
    "narrow_passage",
    "crowd",
)


def load_scenario(name: str) -> ScenarioSpec:
    path = SCENARIOS_DIR / f"{name}.scn"
    if not path.exists():
        raise KeyError(f"unknown scenario {name!r}")
    return parse_scenario_text(path.read_text())


def scenario_library() -> dict:
    """All bundled scenarios, keyed by name."""
    return {name: load_scenario(name) for name in SCENARIO_NAMES}
