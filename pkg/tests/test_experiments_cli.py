import json
from pathlib import Path

import numpy as np
import pytest

from coherent_hartree import experiments as ex
from coherent_hartree.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
QUICK_EPS = [2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -7]


def test_fit_slope_recovers_power_laws():
    eps = np.array([2.0 ** -k for k in range(4, 10)])
    assert ex.fit_slope(eps, 3 * np.sqrt(eps)).slope == pytest.approx(0.5, abs=1e-12)
    fit = ex.fit_slope(eps, 0.2 * eps)
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.constant == pytest.approx(0.2, rel=1e-10)
    rng = np.random.default_rng(0)
    noisy = ex.fit_slope(eps, np.sqrt(eps) * (1 + 0.05 * rng.standard_normal(eps.size)))
    assert noisy.interval[0] <= 0.5 <= noisy.interval[1]
    with pytest.raises(ValueError):
        ex.fit_slope(eps[:3], eps[:3])
    with pytest.raises(ValueError):
        ex.fit_slope(eps, -eps)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    config = ex.load_config(path)
    assert config.kind in ex.KINDS


def test_shipped_configs_match_defaults():
    pairs = {"converge_critical": ex.default_config("converge", "critical"),
             "converge_linear": ex.default_config("converge", "linear"),
             "moving_frame_zero": ex.default_config("moving-frame", "zero"),
             "rectangle_position": ex.rectangle_config("position"),
             "wigner": ex.default_config("wigner")}
    for name, default in pairs.items():
        assert ex.load_config(CONFIGS / f"{name}.toml").numeric_key() == default.numeric_key(), name


def write(tmp_path, text, name="bad.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_config_errors_name_the_key(tmp_path):
    base = 'kind = "converge"\n'
    with pytest.raises(ex.ConfigError, match="unknown key"):
        ex.load_config(write(tmp_path, base + "speed = 3\n"))
    with pytest.raises(ex.ConfigError, match=r"packets\[1\]"):
        ex.load_config(write(tmp_path, base + "[[packets]]\nq=[0.0]\np=[1.0]\n[[packets]]\nq=[1.0]\np=[0.0]\nmass=2\n"))
    with pytest.raises(ex.ConfigError, match="distinct"):
        ex.load_config(write(tmp_path, base + "eps = [0.1, 0.1, 0.05]\n"))
    with pytest.raises(ex.ConfigError, match="q_10, p_10"):
        ex.load_config(write(tmp_path, base + "[[packets]]\nq=[0.0]\np=[1.0]\n[[packets]]\nq=[0.0]\np=[1.0]\n"))
    with pytest.raises(ex.ConfigError, match="missing required key 'kind'"):
        ex.load_config(write(tmp_path, "T = 1.0\n"))
    with pytest.raises(ex.ConfigError):
        ex.load_config(write(tmp_path, "kind = \n"))
    with pytest.raises(ex.ConfigError, match="cannot read"):
        ex.load_config(tmp_path / "missing.toml")


def test_json_configs_and_overrides(tmp_path):
    path = write(tmp_path, json.dumps({"kind": "converge", "regime": "half", "eps_exponents": [4, 5, 6, 7]}), "c.json")
    config = ex.load_config(path)
    assert config.regime == "half" and config.eps == QUICK_EPS
    changed = ex.apply_overrides(config, eps=[0.01, 0.02], regime="zero", jobs=2, dt_factor=0.05)
    assert changed.eps == [0.02, 0.01] and changed.regime == "zero" and changed.jobs == 2
    assert config.config_hash() != changed.config_hash()
    assert ex.apply_overrides(config, jobs=4).numeric_key() == config.numeric_key()
    with pytest.raises(ex.ConfigError):
        ex.apply_overrides(config, jobs=0)


def quick_converge(**changes):
    config = ex.apply_overrides(ex.default_config("converge", "critical"), eps=QUICK_EPS)
    for key, value in changes.items():
        setattr(config, key, value)
    return config


def test_runs_are_deterministic_and_parallel_matches_serial():
    serial = ex.run_experiment(quick_converge(), write=False)
    again = ex.run_experiment(quick_converge(), write=False)
    parallel = ex.run_experiment(quick_converge(jobs=2), write=False)
    assert serial.rows == again.rows
    assert serial.rows == parallel.rows
    assert serial.passed


def test_artifacts_are_written(tmp_path):
    config = quick_converge(out=str(tmp_path / "run"))
    record = ex.run_experiment(config)
    out = tmp_path / "run"
    for name in ("summary.json", "errors.csv", "trajectory.csv", "manifest.json", "timing.json"):
        assert (out / name).is_file(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] == record.passed
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == config.config_hash()
    assert "numpy" in manifest["versions"]
    assert list((out / "plots").glob("*.dat"))


def test_failed_points_are_recorded_not_raised():
    config = quick_converge(eps=[2.0 ** -4, 2.0 ** -30])
    record = ex.run_experiment(config, write=False)
    assert len(record.failures) == 1 and record.failures[0]["eps"] == 2.0 ** -30
    assert not record.passed


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["list-catalog"]) == 0
    assert "shifted_gaussian" in capsys.readouterr().out
    assert main(["validate-config", str(CONFIGS / "wigner.toml")]) == 0
    assert main(["validate-config", str(write(tmp_path, 'kind = "nope"\n'))]) == 2
    assert main(["converge", "--alpha", "3"]) == 2
    assert main(["frobnicate"]) == 2
    dup = write(tmp_path, 'kind = "converge"\n[[packets]]\nq=[0.0]\np=[1.0]\n[[packets]]\nq=[0.0]\np=[1.0]\n')
    assert main(["run", str(dup)]) == 2
    assert "q_10, p_10" in capsys.readouterr().err


def test_cli_run_passes_and_fails(tmp_path):
    eps = [str(e) for e in QUICK_EPS]
    assert main(["run", str(CONFIGS / "converge_critical.toml"), "--eps", *eps, "--quiet",
                 "--out", str(tmp_path / "ok")]) == 0
    assert (tmp_path / "ok" / "summary.json").is_file()
    strict = write(tmp_path, (CONFIGS / "converge_critical.toml").read_text().replace(
        "[envelope]", "[tolerance]\nslope = 2.0\n\n[envelope]"), "strict.toml")
    assert main(["run", str(strict), "--eps", *eps, "--quiet"]) == 1
