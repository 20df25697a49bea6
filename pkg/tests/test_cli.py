import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from dumbbellflow.cli import ConfigError, groups_report, main, parse_config, write_table

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def dump(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


SDE = {"scenario": "poiseuille", "solver": "inertialess_sde", "seed": 3,
       "physical": {"gap": 4.0, "pressure_gradient": 0.5},
       "numerical": {"n_particles": 400, "dt": 0.01, "t_final": 0.6, "samples": 20, "sample_every": 1,
                     "n_bins": 4}}


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", str(path)]) == 0
    assert capsys.readouterr().out.startswith("OK")


def test_validate_echoes_groups(tmp_path, capsys):
    cfg = {"scenario": "couette", "solver": "fokker_planck",
           "physical": {"gap": 1.0, "wall_velocity": 1.0, "velocity_scale": 1.0}}
    assert main(["validate", dump(tmp_path, cfg)]) == 0
    out = capsys.readouterr().out
    # zeta = 4, H = 1: lambda_H = zeta / 4H = 1, so De = lambda_H V / L = 1
    assert "De=1 " in out and "ell0/L=1 " in out


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = {"scenario": "equilibrium", "solver": "fokker_planck", "physical": {"zeta": 4.0, "viscosity": 2.0}}
    assert main(["validate", dump(tmp_path, cfg)]) == 2
    out = capsys.readouterr().out
    assert "INVALID" in out and "'viscosity'" in out and "physical" in out


@pytest.mark.parametrize("cfg, fragment", [
    ({"scenario": "equilibrium", "solver": "fokker_planck", "physical": {"dim": 3}}, "dim=2"),
    ({"scenario": "equilibrium", "solver": "fokker_planck", "physical": {"spring": "fene"}}, "q0"),
    ({"scenario": "poiseuille", "solver": "coupled"}, "pressure_gradient"),
    ({"scenario": "homogeneous_shear", "solver": "fokker_planck",
      "physical": {"shear_rate": 1.0, "geometry": "channel"}}, "free"),
    ({"scenario": "epsilon_ladder", "solver": "inertialess_sde"}, "langevin"),
    ({"scenario": "equilibrium", "solver": "fokker_planck", "physical": {"zeta": -1.0}}, "zeta"),
])
def test_incompatible_configs_rejected(cfg, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(cfg)
    assert any(fragment in p for p in exc.value.problems)


def test_warnings_for_questionable_combinations():
    rc = parse_config({"scenario": "equilibrium", "solver": "langevin", "stress_mode": "wall_aware",
                       "physical": {"geometry": "free"}})
    text = " ".join(rc.warnings)
    assert "free space" in text and "mass" in text


def test_malformed_json_writes_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"scenario": "equilibrium",, }')
    out_dir = tmp_path / "out"
    assert main(["run", str(bad), "--out", str(out_dir)]) == 2
    assert not out_dir.exists()
    assert "malformed JSON" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json"), "--out", str(out_dir)]) == 2
    assert not out_dir.exists()


@given(st.sampled_from(["a", 1, [], None, "x"]))
def test_non_object_top_level_rejected(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_equilibrium_run_summary(tmp_path):
    out = tmp_path / "eq"
    assert main(["run", str(CONFIGS / "equilibrium.json"), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stress_norm_over_NkT"] <= 1e-3
    assert abs(summary["second_moments"]["xx"] - 1.0) <= 1e-2
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["scenario"] == "equilibrium"
    assert {"run_id", "seed", "versions", "wall_clock_s", "groups"} <= set(meta)
    assert "summary.json" in meta["files"]


def test_particle_run_is_reproducible_and_tabulates_units(tmp_path):
    path = dump(tmp_path, SDE)
    runs = []
    for tag in ("a", "b"):
        assert main(["run", path, "--out", str(tmp_path / tag)]) == 0
        runs.append((tmp_path / tag / "summary.json").read_text())
    assert runs[0] == runs[1]
    lines = (tmp_path / "a" / "profiles.csv").read_text().splitlines()
    assert lines[0].startswith("# units:") and "[1/m^2]" in lines[0]
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["y", "N", "N_stderr"] and len(rows) == 1 + 4
    summary = json.loads(runs[0])
    assert summary["rng"]["generator"] == "philox4x32-10" and summary["rng"]["seed"] == 3


def test_solver_failure_exits_3_with_history(tmp_path):
    cfg = {"scenario": "poiseuille", "solver": "coupled", "physical": {"gap": 4.0, "pressure_gradient": 0.5},
           "numerical": {"ny": 8, "nq": 8, "t_final": 1.0, "macro_dt": 0.5, "tol": 1e-12}}
    out = tmp_path / "fail"
    assert main(["run", dump(tmp_path, cfg), "--out", str(out)]) == 3
    failure = json.loads((out / "failure.json").read_text())
    assert failure["error"] == "ConvergenceError" and failure["residual_history"]
    assert "failure" in json.loads((out / "metadata.json").read_text())
    assert not (out / "summary.json").exists()


def test_groups_report_keys():
    g = groups_report(parse_config({"scenario": "equilibrium", "solver": "fokker_planck"}))
    assert {"De", "Re", "ell0", "L", "ell0_over_L", "epsilon", "lambda_H", "lambda_B", "V"} <= set(g)
    assert g["lambda_H"] == pytest.approx(1.0)


def test_write_table_header(tmp_path):
    path = tmp_path / "t.csv"
    write_table(path, ["y", "v"], ["m", "m/s"], [[0.0, 1.0], [1.0, 2.0]])
    lines = path.read_text().splitlines()
    assert lines[0] == "# units: y [m], v [m/s]" and lines[1] == "y,v"


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "dumbbellflow.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("run", "validate", "suite"):
        assert cmd in res.stdout
