"""Regenerate the bundled scenario maps and scenario files.

Run from the repository root:

    python3 scripts/build_scenarios.py

Maps are authored here as occupancy arrays at 0.1 m resolution and
serialized to src/hanav/maps/*.map; scenario files are written to
src/hanav/scenarios/*.scn.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hanav.core import Pose2D
from hanav.costmap import OccupancyGrid, serialize_map_text
from hanav.scenarios import MAPS_DIR, SCENARIOS_DIR

RES = 0.1


def boxed(h_m, w_m):
    occ = np.zeros((int(round(h_m / RES)), int(round(w_m / RES))), bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return occ


def cells(v):
    return int(round(v / RES))


def fill(occ, x0, y0, x1, y1):
    """Occupy the rectangle [x0,x1) x [y0,y1) in meters."""
    occ[cells(y0):cells(y1), cells(x0):cells(x1)] = True


def save_map(name, occ):
    grid = OccupancyGrid(RES, Pose2D(0.0, 0.0, 0.0), occ)
    (MAPS_DIR / f"{name}.map").write_text(serialize_map_text(grid))
    print(f"wrote maps/{name}.map  ({occ.shape[1]}x{occ.shape[0]})")


def save_scn(name, text):
    (SCENARIOS_DIR / f"{name}.scn").write_text(text.strip() + "\n")
    print(f"wrote scenarios/{name}.scn")


# ---------------------------------------------------------------------------
# maps

def door_room():
    # two rooms split by a deep wall whose 1.0 m door is a short passage;
    # the east room has a wall stub leaving a side gap a static human can
    # stand next to
    occ = boxed(8.0, 12.0)
    fill(occ, 5.0, 0.0, 6.6, 3.5)
    fill(occ, 5.0, 4.5, 6.6, 8.0)
    fill(occ, 9.0, 5.5, 9.3, 8.0)  # stub from the north wall down to y=5.5
    return occ


def narrow_corridor():
    # 1.1 m corridor between two rooms, with a 1.0 m side pocket
    occ = boxed(8.0, 14.0)
    # south corridor wall, interrupted by the pocket at x in [5.2, 6.2]
    fill(occ, 4.0, 0.0, 4.1, 3.5)
    fill(occ, 4.0, 3.4, 5.2, 3.5)
    fill(occ, 6.2, 3.4, 10.0, 3.5)
    fill(occ, 9.9, 0.0, 10.0, 3.5)
    # pocket walls (depth down to y=2.3)
    fill(occ, 5.1, 2.3, 5.2, 3.5)
    fill(occ, 6.2, 2.3, 6.3, 3.5)
    fill(occ, 5.1, 2.2, 6.3, 2.3)
    # north corridor wall at y=4.6
    fill(occ, 4.0, 4.6, 4.1, 8.0)
    fill(occ, 4.0, 4.6, 10.0, 4.7)
    fill(occ, 9.9, 4.6, 10.0, 8.0)
    return occ


def pillar_corridor():
    # 2.4 m corridor with square pillars leaving ~1.0 m at either side
    occ = boxed(6.0, 14.0)
    fill(occ, 0.0, 0.0, 14.0, 1.8)
    fill(occ, 0.0, 4.2, 14.0, 6.0)
    for px in (4.5, 7.0, 9.5):
        fill(occ, px - 0.2, 2.8, px + 0.2, 3.2)
    return occ


def wide_corridor():
    occ = boxed(7.0, 12.0)
    fill(occ, 0.0, 0.0, 12.0, 2.0)
    fill(occ, 0.0, 5.0, 12.0, 7.0)
    return occ


def open_space():
    return boxed(10.0, 12.0)


def narrow_passage():
    # 1.2 m gap in a dividing wall between two open areas
    occ = boxed(8.0, 12.0)
    fill(occ, 6.0, 0.0, 6.1, 3.4)
    fill(occ, 6.0, 4.6, 6.1, 8.0)
    return occ


def crowd_corridor():
    occ = boxed(6.0, 16.0)
    return occ


MAPS = {
    "door_room": door_room,
    "narrow_corridor": narrow_corridor,
    "pillar_corridor": pillar_corridor,
    "wide_corridor": wide_corridor,
    "open_space": open_space,
    "narrow_passage": narrow_passage,
    "crowd_corridor": crowd_corridor,
}


# ---------------------------------------------------------------------------
# scenarios

SCENARIOS = {
    "door_crossing": """
name door_crossing
map door_room.map
prediction PredictBehind
seed 0
max_time 60
robot_start 1.5 4.0 0.0
robot_goal 11.0 4.9 0.0
human h1
  controller scripted
  start 10.5 4.0 3.141593
  speed 1.0
  yields true
  waypoint 4.0 4.0
  waypoint 1.8 4.0
end
""",
    "door_crossing_static_facing": """
name door_crossing_static_facing
map door_room.map
prediction PredictBehind
seed 0
max_time 60
robot_start 1.5 4.0 0.0
robot_goal 11.0 4.9 0.0
human h1
  controller constant
  start 9.05 3.9 1.570796
  velocity 0 0
end
""",
    "door_crossing_static_away": """
name door_crossing_static_away
map door_room.map
prediction PredictBehind
seed 0
max_time 60
robot_start 1.5 4.0 0.0
robot_goal 11.0 4.9 0.0
human h1
  controller constant
  start 9.05 3.9 -1.570796
  velocity 0 0
end
""",
    "narrow_corridor": """
name narrow_corridor
map narrow_corridor.map
prediction PredictGoal
seed 0
max_time 60
robot_start 1.5 4.0 0.0
robot_goal 12.5 4.0 0.0
goal_candidate 1.5 4.1
goal_candidate 12.5 4.1
human h1
  controller scripted
  start 12.5 4.1 3.141593
  speed 1.0
  yields true
  waypoint 8.0 4.1
  waypoint 1.8 4.1
end
""",
    "pillar_corridor": """
name pillar_corridor
map pillar_corridor.map
prediction PredictGoal
seed 0
max_time 60
robot_start 1.5 3.0 0.0
robot_goal 12.5 3.0 0.0
goal_candidate 1.5 3.0
goal_candidate 12.5 3.0
human h1
  controller scripted
  start 12.5 3.1 3.141593
  speed 1.0
  yields true
  waypoint 8.0 3.6
  waypoint 1.8 3.6
end
""",
    "wide_corridor": """
name wide_corridor
map wide_corridor.map
prediction PredictBehind
seed 0
max_time 60
robot_start 1.5 3.3 0.0
robot_goal 10.5 3.3 0.0
human h1
  controller ghost
  start 10.5 3.9 3.141593
end
""",
    "open_space": """
name open_space
map open_space.map
prediction PredictGoal
seed 0
max_time 60
robot_start 2.0 5.0 0.0
robot_goal 10.0 5.0 0.0
goal_candidate 6.3 9.5
goal_candidate 6.3 0.8
human h1
  controller scripted
  start 6.3 9.5 -1.570796
  speed 0.85
  yields false
  waypoint 6.3 0.8
end
""",
    # operator-steered walker for the live service; not part of the
    # nine-scenario benchmark library
    "teleop": """
name teleop
map open_space.map
prediction PredictBehind
seed 0
max_time 300
robot_start 2.0 5.0 0.0
robot_goal 10.0 5.0 0.0
human h1
  controller external
  start 8.0 6.5 3.141593
  goal 2.0 3.5
end
""",
    "narrow_passage": """
name narrow_passage
map narrow_passage.map
prediction PredictBehind
seed 0
max_time 60
robot_start 2.0 4.0 0.0
robot_goal 10.0 4.0 0.0
human h1
  controller scripted
  start 10.0 4.2 3.141593
  speed 1.2
  yields true
  waypoint 7.0 4.2
  waypoint 2.0 4.2
end
""",
}


def crowd_scenario():
    from hanav.costmap import parse_map_text
    from hanav.simulator import spawn_crowd

    grid = parse_map_text((MAPS_DIR / "crowd_corridor.map").read_text())
    specs = spawn_crowd(
        grid, 5, seed=42, y_range=(1.4, 4.6), x_range=(4.0, 12.0)
    )
    lines = [
        "name crowd",
        "map crowd_corridor.map",
        "prediction PredictBehind",
        "mode_lock VelObs",
        "seed 0",
        "max_time 60",
        "robot_start 1.5 3.0 0.0",
        "robot_goal 14.5 3.0 0.0",
    ]
    for s in specs:
        lines += [
            f"human {s.id}",
            "  controller scripted",
            f"  start {s.start.x:.4f} {s.start.y:.4f} {s.start.theta:.4f}",
            f"  speed {s.speed:.4f}",
            f"  start_delay {s.start_delay:.4f}",
            "  yields true",
        ]
        for x, y in s.waypoints:
            lines.append(f"  waypoint {x:.4f} {y:.4f}")
        lines.append("end")
    return "\n".join(lines)


def main():
    MAPS_DIR.mkdir(exist_ok=True)
    SCENARIOS_DIR.mkdir(exist_ok=True)
    for name, build in MAPS.items():
        save_map(name, build())
    for name, text in SCENARIOS.items():
        save_scn(name, text)
    save_scn("crowd", crowd_scenario())


if __name__ == "__main__":
    main()
