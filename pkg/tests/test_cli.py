import csv
import io
import json

import pytest

from palatini_pca import cli

SMALL = ["--set", "grid.dims=[4,4,4]"]


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_minkowski_passes(capsys):
    code, out, _ = _run(capsys, "check", *SMALL)
    assert code == cli.EXIT_OK
    rep = json.loads(out)
    assert rep["schema_version"] == "1.0"
    assert all(r["max"] == 0.0 for r in rep["tables"]["residuals"])


def test_check_unsolved_random_data_fails(capsys):
    code, out, _ = _run(
        capsys, "check", *SMALL, "--set", "initial_data.builder=random-smooth", "--set", "initial_data.params.solve=false"
    )
    assert code == cli.EXIT_TOLERANCE
    rows = {r["label"]: r for r in json.loads(out)["tables"]["residuals"]}
    assert rows["C1"]["max"] > 1e-3


def test_check_schwarzschild_4d(capsys):
    code, out, _ = _run(
        capsys, "check", "--set", "grid={dims: [8,8,8,8], h: 0.125, origin: [0,3,3,3]}", "--set", "options.solution=schwarzschild"
    )
    assert code == cli.EXIT_OK
    rows = {r["label"]: r for r in json.loads(out)["tables"]["residuals"]}
    assert rows["einstein"]["max"] < 1e-2


def test_pca_toy_systems(capsys):
    code, out, _ = _run(capsys, "pca", "--set", "options.system=toy-symplectic")
    assert code == cli.EXIT_OK
    rep = json.loads(out)
    assert rep["values"]["stabilized_at"] == 1 and rep["values"]["final_constraints"] == []
    code, out, _ = _run(capsys, "pca", "--set", "options.system=toy-degenerate")
    rep = json.loads(out)
    assert code == cli.EXIT_OK and rep["values"]["stabilized_at"] == 2
    assert rep["tables"]["steps"][0]["new_constraints"] == ["dg/dz"]


def test_evolve_minkowski_zero_drift(capsys):
    code, out, _ = _run(capsys, "evolve", *SMALL, "--set", "options.steps=100", "--set", "options.ds=0.01")
    assert code == cli.EXIT_OK
    rows = json.loads(out)["tables"]["drift"]
    assert len(rows) == 101
    assert all(r[k] == 0.0 for r in rows for k in ("C1", "C5", "C6"))


def test_gauge_constant_parameters(capsys):
    code, out, _ = _run(capsys, "gauge", *SMALL, "--set", "options.constant_parameters=true", "--set", "options.pairs=2")
    assert code == cli.EXIT_OK
    assert json.loads(out)["values"]["gauge_closure_max"] < 1e-10


def test_multipliers(capsys):
    code, out, _ = _run(capsys, "multipliers", "--set", "options.problems=[circle, identity]", "--set", "options.samples=2000")
    assert code == cli.EXIT_OK
    rows = json.loads(out)["tables"]["critical_points"]
    assert sorted(round(r["m"][0], 6) for r in rows if r["problem"] == "circle") == [1.0, 3.0]


def test_csv_output_and_out_directory(tmp_path, capsys):
    code = cli.main(["check", *SMALL, "--format", "csv", "--out", str(tmp_path) + "/"])
    assert code == cli.EXIT_OK
    text = (tmp_path / "check.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) > 6


def test_config_file_seed_and_tol(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("grid: {dims: [4,4,4], h: 0.5}\ninitial_data: {builder: random-smooth}\n")
    code, out, _ = _run(capsys, "check", "--config", str(cfg), "--seed", "3", "--tol", "1e3")
    assert code == cli.EXIT_OK
    rep = json.loads(out)
    assert rep["config"]["initial_data"]["params"]["seed"] == 3
    assert rep["config"]["tolerances"]["residual"] == 1e3


def test_reports_are_deterministic(capsys):
    args = ["check", *SMALL, "--set", "initial_data.builder=random-smooth", "--seed", "42"]
    reps = []
    for _ in range(2):
        _, out, _ = _run(capsys, *args)
        rep = json.loads(out)
        rep.pop("timing")
        reps.append(json.dumps(rep, sort_keys=True))
    assert reps[0] == reps[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["check", "--set", "grid.dims=[4,4]"],
        ["check", "--set", "tolerances.residual=-1"],
        ["check", "--set", "grid.dims=[64,64,64]"],
        ["check", "--set", "bogus=1"],
        ["check", "--set", "initial_data.builder=nope"],
        ["check", "--config", "/nonexistent.yaml"],
    ],
)
def test_config_errors(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == cli.EXIT_CONFIG
    assert "configuration error" in err

