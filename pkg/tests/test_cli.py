import numpy as np
import pytest

from hanav.cli import main
from hanav.core import Pose2D
from hanav.costmap import OccupancyGrid, serialize_map_text
from hanav.scenarios import SCENARIO_NAMES, serialize_scenario_text
from hanav.simulator import ScenarioSpec


@pytest.fixture
def tiny_scenario(tmp_path):
    occ = np.zeros((40, 40), bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    grid = OccupancyGrid(0.1, Pose2D(0, 0, 0), occ)
    (tmp_path / "room.map").write_text(serialize_map_text(grid))
    spec = ScenarioSpec(
        name="tiny",
        map_text="",
        robot_start=Pose2D(1.0, 2.0, 0.0),
        robot_goal=Pose2D(2.6, 2.0, 0.0),
        max_time=20.0,
    )
    scn = tmp_path / "tiny.scn"
    scn.write_text(serialize_scenario_text(spec, "room.map"))
    return scn


class TestListScenarios:
    def test_prints_all_names(self, capsys):
        assert main(["list-scenarios"]) == 0
        out = capsys.readouterr().out.split()
        assert out == list(SCENARIO_NAMES)


class TestBadArgs:
    def test_unknown_scenario_exits_3(self, capsys):
        assert main(["run", "no_such_place"]) == 3
        assert "error" in capsys.readouterr().err

    def test_backoff_mode_lock_rejected(self, capsys):
        assert main(["run", "open_space", "--mode-lock", "BackoffRecovery"]) == 3
        assert "BackoffRecovery" in capsys.readouterr().err

    def test_nonsense_mode_lock_rejected(self, tiny_scenario):
        assert main(["run", str(tiny_scenario), "--mode-lock", "WarpDrive"]) == 3


class TestRun:
    def test_run_writes_trace_csv(self, tiny_scenario, tmp_path, capsys):
        out = tmp_path / "t.csv"
        assert main(["run", str(tiny_scenario), "--seed", "1",
                     "--trace", str(out)]) == 0
        header = out.read_text().splitlines()[0]
        assert header.startswith("t,robot_x,robot_y")
        assert "completed" in capsys.readouterr().out

    def test_report_renders_figures_alongside_csv(self, tiny_scenario, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["run", str(tiny_scenario), "--trace", str(out),
                     "--report"]) == 0
        assert (tmp_path / "t_trajectory.png").exists()
        assert (tmp_path / "t_profile.png").exists()

    def test_mode_lock_honored_in_trace(self, tiny_scenario, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["run", str(tiny_scenario), "--mode-lock", "SingleBand",
                     "--trace", str(out)]) == 0
        modes = {line.split(",")[6] for line in out.read_text().splitlines()[1:]}
        assert modes == {"SingleBand"}


class TestBench:
    def test_bench_writes_markdown_and_csv(self, tiny_scenario, tmp_path, capsys):
        table = tmp_path / "table.md"
        assert main(["bench", str(tiny_scenario), "--reps", "2",
                     "--out", str(table)]) == 0
        text = table.read_text()
        assert text.startswith("| scenario")
        assert "2/2" in text
        csv = (tmp_path / "table.csv").read_text()
        assert csv.splitlines()[0].startswith("scenario,seed,completed")
        assert len(csv.strip().splitlines()) == 3
