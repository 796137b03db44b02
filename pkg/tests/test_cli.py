import csv

import numpy as np
import pytest

from netwatermark import (
    DetectorConfig,
    RunConfig,
    Scenario,
    load_scenario,
    verify_gain_triple,
)
from netwatermark.cli import main, rejection_cutoff


def plant_only_scenario(model, tmp_path, name="plant.json"):
    from netwatermark import save_scenario

    scenario = Scenario(
        model=model,
        gains=None,
        detector=DetectorConfig(),
        attack=None,
        run=RunConfig(),
    )
    path = tmp_path / name
    save_scenario(scenario, path)
    return path


def read_report(path):
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    return rows


def test_preset_command_writes_loadable_scenario(tmp_path, capsys):
    out = tmp_path / "platoon.json"
    assert main(["platoon-preset", "--out", str(out), "--seed", "5"]) == 0
    scenario = load_scenario(out)
    assert scenario.model.kappa == 3
    assert scenario.run.seed == 5
    assert scenario.attack is None
    assert "wrote platoon scenario" in capsys.readouterr().out


def test_preset_command_attack_variant(tmp_path):
    out = tmp_path / "attacked.json"
    assert main(["platoon-preset", "--out", str(out), "--attack"]) == 0
    scenario = load_scenario(out)
    assert scenario.attack is not None
    assert set(scenario.attack.comm) == {(1, 2)}


def test_design_square_writes_stabilizing_gains(tmp_path, two_agent_model, capsys):
    path = plant_only_scenario(two_agent_model, tmp_path)
    rc = main(["design", "--scenario", str(path), "--method", "square", "--lambda", "0.5"])
    assert rc == 0
    scenario = load_scenario(path)
    assert scenario.gains is not None
    report = verify_gain_triple(scenario.model, scenario.gains)
    assert report.ok
    printed = capsys.readouterr().out
    assert "watermark lags" in printed
    assert "gains written back" in printed


def test_design_shared_range_fails_for_disjoint_ranges(tmp_path, two_agent_model, capsys):
    path = plant_only_scenario(two_agent_model, tmp_path)
    rc = main(["design", "--scenario", str(path), "--method", "shared-range"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
    assert load_scenario(path).gains is None


def test_design_preserves_existing_watermark_covariance(tmp_path, two_agent_model, capsys):
    from netwatermark import save_scenario

    path = plant_only_scenario(two_agent_model, tmp_path)
    assert main(["design", "--scenario", str(path), "--method", "square", "--lambda", "0.4"]) == 0
    scenario = load_scenario(path)
    for block in scenario.gains.sigma_e_blocks:
        assert np.array_equal(block, np.eye(1))
    scenario.gains.sigma_e_blocks[0] = np.array([[0.2]])
    save_scenario(scenario, path)
    assert main(["design", "--scenario", str(path), "--method", "square", "--lambda", "0.3"]) == 0
    scenario = load_scenario(path)
    assert np.array_equal(scenario.gains.sigma_e_blocks[0], [[0.2]])
    assert np.array_equal(scenario.gains.sigma_e_blocks[1], np.eye(1))


def test_calibrate_rejects_too_few_windows(tmp_path, capsys):
    out = tmp_path / "platoon.json"
    main(["platoon-preset", "--out", str(out)])
    rc = main(["calibrate", "--scenario", str(out), "--windows", "10"])
    assert rc == 2
    assert "100" in capsys.readouterr().err


def test_calibrate_requires_gains(tmp_path, two_agent_model, capsys):
    path = plant_only_scenario(two_agent_model, tmp_path)
    rc = main(["calibrate", "--scenario", str(path), "--windows", "120"])
    assert rc == 2
    assert "design" in capsys.readouterr().err


def test_detect_requires_thresholds(tmp_path, capsys):
    out = tmp_path / "platoon.json"
    main(["platoon-preset", "--out", str(out)])
    rc = main(["detect", "--scenario", str(out), "--out", str(tmp_path / "report.csv")])
    assert rc == 2
    assert "calibrate" in capsys.readouterr().err


def test_simulate_csv_is_deterministic(tmp_path, capsys):
    out = tmp_path / "platoon.json"
    main(["platoon-preset", "--out", str(out)])
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    assert main(["simulate", "--scenario", str(out), "--out", str(first)]) == 0
    assert main(["simulate", "--scenario", str(out), "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    with open(first, newline="") as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 1 + 2500
    assert rows[0][0] == "x[0]"


def test_full_flow_null_then_attack(tmp_path, capsys):
    clean = tmp_path / "clean.json"
    attacked = tmp_path / "attacked.json"
    main(["platoon-preset", "--out", str(clean)])
    main(["platoon-preset", "--out", str(attacked), "--attack"])

    rc = main(
        ["calibrate", "--scenario", str(clean), "--windows", "200", "--seed", "12345"]
    )
    assert rc == 0
    printed = capsys.readouterr().out
    assert "tau =" in printed and "held-out" in printed
    calibrated = load_scenario(clean)
    assert calibrated.detector.tau is not None
    assert calibrated.detector.tau.shape == (3,)
    assert calibrated.detector.calibration_windows == 200

    null_report = tmp_path / "null_report.csv"
    rc = main(["detect", "--scenario", str(clean), "--out", str(null_report)])
    assert rc == 0
    assert "no attack detected" in capsys.readouterr().out

    rows = read_report(null_report)
    assert len(rows) == 3 * 20
    assert list(rows[0]) == ["subcontroller", "window_start", "nll", "tau", "decision"]
    for row in rows:
        expected = "reject" if float(row["nll"]) > float(row["tau"]) else "accept"
        assert row["decision"] == expected
    null_rejections = sum(row["decision"] == "reject" for row in rows)
    assert null_rejections < rejection_cutoff(len(rows), 0.05)

    scenario = load_scenario(attacked)
    scenario.detector.tau = calibrated.detector.tau
    from netwatermark import save_scenario

    save_scenario(scenario, attacked)
    attack_report = tmp_path / "attack_report.csv"
    rc = main(["detect", "--scenario", str(attacked), "--out", str(attack_report)])
    assert rc == 3
    assert "attack detected" in capsys.readouterr().out
    attack_rows = read_report(attack_report)
    attack_rejections = sum(row["decision"] == "reject" for row in attack_rows)
    assert attack_rejections >= rejection_cutoff(len(attack_rows), 0.05)
    assert attack_rejections > null_rejections


def test_detect_reports_are_deterministic(tmp_path):
    clean = tmp_path / "clean.json"
    main(["platoon-preset", "--out", str(clean)])
    rc = main(["calibrate", "--scenario", str(clean), "--windows", "100", "--seed", "7"])
    assert rc == 0
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    assert main(["detect", "--scenario", str(clean), "--out", str(first)]) in (0, 3)
    assert main(["detect", "--scenario", str(clean), "--out", str(second)]) in (0, 3)
    assert first.read_bytes() == second.read_bytes()


def test_missing_scenario_file_is_an_error(tmp_path, capsys):
    rc = main(["simulate", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path / "t.csv")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_bad_usage_exits_two(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        main(["detect", "--no-such-flag"])
    assert excinfo.value.code == 2


def test_rejection_cutoff_matches_binomial_quantile():
    from scipy.stats import binom

    assert rejection_cutoff(60, 0.05) == int(binom.ppf(0.95, 60, 0.05)) + 1
    assert rejection_cutoff(60, 0.05) == 7
    assert rejection_cutoff(1, 0.05) == 1
