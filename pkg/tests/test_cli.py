import csv
import json

import pytest

from trough_dmpc.cli import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, main
from trough_dmpc.scenario import AladinSettings, IrradianceSpec, ScenarioConfig, save_scenario


def scenario_file(tmp_path, **kw):
    base = dict(n_loops=3, duration=120.0, dt_cluster=60.0, q_total=3e-3, t_init=240.0, n_cl_max=2,
                warmup=30.0, eta=[0.55, 0.6, 0.65],
                irradiance=IrradianceSpec(peak=900.0, day_length=25200.0, day_offset=9000.0))
    base.update(kw)
    path = tmp_path / "s.toml"
    save_scenario(ScenarioConfig(**base), path)
    return path


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scenario_file(tmp_path)), "--mode", "dynamic", "--out", str(out)]) == EXIT_OK
    for name in ("log.csv", "control.csv", "meta.json", "summary.json", "report.csv",
                 "trajectories.svg", "timing.svg"):
        assert (out / name).is_file(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed_steps"] == 0 and summary["j_cum"] >= 0
    with open(out / "log.csv") as fh:
        assert sum(1 for _ in csv.reader(fh)) == 241
    assert "J_cum=" in capsys.readouterr().out


def test_run_accepts_infinite_cluster_period(tmp_path):
    out = tmp_path / "out"
    args = ["run", "--scenario", str(scenario_file(tmp_path)), "--mode", "dynamic", "--dt-cluster", "inf",
            "--ncl-max", "3", "--out", str(out)]
    assert main(args) == EXIT_OK
    meta = json.loads((out / "meta.json").read_text())
    assert len(meta["partitions"]) == 1


def test_compare_table(tmp_path, capsys):
    out = tmp_path / "cmp"
    args = ["compare", "--scenario", str(scenario_file(tmp_path)), "--modes", "fine", "dynamic:2", "coarse",
            "--out", str(out)]
    assert main(args) == EXIT_OK
    with open(out / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["mode"] for r in rows] == ["fine", "dynamic-2", "coarse"]
    assert {"j_cum", "e_bar", "mean_cluster_size"} <= set(rows[0])
    assert (out / "dynamic-2" / "log.csv").is_file() and (out / "timing.svg").is_file()
    assert "dynamic-2" in capsys.readouterr().out


def test_input_errors(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == EXIT_INPUT
    bad = tmp_path / "bad.toml"
    bad.write_text("n_loops = 0\n")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err
    args = ["compare", "--scenario", str(scenario_file(tmp_path)), "--modes", "medium", "--out", str(tmp_path)]
    assert main(args) == EXIT_INPUT
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "x", "--mode", "medium", "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "x", "--dt-cluster", "-5", "--out", str(tmp_path)])


def test_solver_failure_exit_code(tmp_path, capsys):
    path = scenario_file(tmp_path, aladin=AladinSettings(max_iter=1), epsilon=1e-12)
    assert main(["run", "--scenario", str(path), "--mode", "fine", "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "did not converge" in capsys.readouterr().err
