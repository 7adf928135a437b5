import json

import numpy as np
import pytest

from recouple.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, load_config, main, validate, ConfigError
from recouple.io import read_csv, read_json, read_scan_csv, report_from_json, write_scan_csv, operator_from_json
from recouple.experiments import fidelity_scan

SMALL_SCAN = {
    "experiment": "fidelity-scan",
    "params": {"tau_D": [1e-4, 1e-2], "tau_dw": [1e-1, 3e-1, 1.0], "seeds": 1},
    "seed": 0,
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_validate_well_formed(tmp_path):
    assert validate(SMALL_SCAN) == []
    assert main(["validate", write(tmp_path, SMALL_SCAN)]) == EXIT_OK


def test_validate_index_out_of_range(tmp_path, capsys):
    cfg = {"experiment": "recoupling-check", "params": {"n": 3, "k": 0, "l": 3, "T": 1e-3}}
    diags = validate(cfg)
    assert [d.path for d in diags] == ["params.l"]
    assert main(["validate", write(tmp_path, cfg)]) == EXIT_INVALID
    assert "params.l" in capsys.readouterr().err


def test_validate_bad_axis_reports_column():
    cfg = {"experiment": "average", "sequence": {"mansfield": "[Z,Q,X]", "tau": 1.0},
           "operator": {"terms": {"Z": 1.0}}}
    (diag,) = validate(cfg)
    assert diag.path == "sequence.mansfield" and "column 4" in diag.message


def test_bad_json_reports_position(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "experiment": "average",\n  "params": {,}\n}')
    assert main(["validate", str(path)]) == EXIT_INVALID
    assert "line 3" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        load_config("[1, 2]")


def test_unknown_experiment_and_missing_file(tmp_path):
    assert main(["run", write(tmp_path, {"experiment": "nope"})]) == EXIT_INVALID
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_RUNTIME


def test_preset_average(tmp_path):
    assert main(["preset", "mrev16-offsets", "--out", str(tmp_path)]) == EXIT_OK
    avg = operator_from_json(read_json(tmp_path / "average.json")["average"])
    assert avg.coeff("Z") == pytest.approx(1 / 3, abs=1e-15)
    manifest = read_json(tmp_path / "manifest.json")
    assert manifest["outputs"] == ["average.json"] and manifest["checks_passed"]


def test_preset_recouple3(tmp_path):
    assert main(["preset", "recouple3", "--out", str(tmp_path)]) == EXIT_OK
    rep = report_from_json(read_json(tmp_path / "recoupling.json"))
    assert rep.ratio == pytest.approx(8 / 9) and rep.exact
    assert rep.fidelity > 0.99


def test_preset_table1(tmp_path):
    assert main(["preset", "table1", "--out", str(tmp_path)]) == EXIT_OK
    body = read_json(tmp_path / "recoupling.json")
    assert len(body["table"]) == 16


def test_scan_csv_shape_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    path = write(tmp_path, SMALL_SCAN)
    assert main(["run", path, "--out", str(a)]) == EXIT_OK
    assert main(["run", path, "--out", str(b)]) == EXIT_OK
    header, data = read_csv(a / "fidelity_scan.csv")
    assert header == ["tau_D", "tau_dw", "fidelity"] and data.shape == (6, 3)
    assert (a / "fidelity_scan.csv").read_bytes() == (b / "fidelity_scan.csv").read_bytes()
    assert read_json(a / "manifest.json")["config"]["seed"] == 0


def test_seed_override_and_env_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RECOUPLE_OUTPUT_DIR", str(tmp_path / "env"))
    path = write(tmp_path, SMALL_SCAN)
    assert main(["--seed", "5", "run", path]) == EXIT_OK
    first = (tmp_path / "env" / "fidelity_scan.csv").read_bytes()
    assert read_json(tmp_path / "env" / "manifest.json")["seed"] == 5
    assert main(["run", path, "--seed", "0", "--out", str(tmp_path / "zero")]) == EXIT_OK
    assert (tmp_path / "zero" / "fidelity_scan.csv").read_bytes() != first


def test_selectivity_run(tmp_path):
    cfg = {"experiment": "selectivity", "params": {"ratios": [0.5, 3.0], "omega_rf": 1.0}}
    assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_OK
    header, data = read_csv(tmp_path / "selectivity.csv")
    assert header == ["ratio", "predicted", "simulated"] and data.shape == (2, 3)


def test_symmetry_run(tmp_path):
    cfg = {"experiment": "symmetry-check", "sequence": {"builder": "whh4", "tau": 1e-6},
           "system": {"offsets": [0.0, 1.0], "pairs": [[0, 1, 1.0]]},
           "operator": {"dipolar": True}}
    assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert read_json(tmp_path / "symmetry.json")["h0_norm"] == 0


def test_scan_csv_round_trip(tmp_path):
    res = fidelity_scan(tau_d=[1e-4, 1e-3], tau_dw=[0.2, 0.5, 1.0], seeds=1)
    back = read_scan_csv(write_scan_csv(res, tmp_path / "s.csv"))
    assert np.array_equal(back.x, res.x) and np.array_equal(back.y, res.y)
    assert np.array_equal(back.values, res.values)
