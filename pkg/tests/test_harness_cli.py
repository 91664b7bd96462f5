import json
import os

import pytest

from loopsoup import cli
from loopsoup.harness import DEFAULTS, EXPERIMENTS, ConfigError, ExperimentConfig, run


def test_every_experiment_has_defaults():
    assert set(DEFAULTS) == set(EXPERIMENTS)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig("soup").with_values(reps=50, mu=-0.3)
    text = cfg.to_text()
    again = ExperimentConfig.from_text(text)
    assert again.values == cfg.values
    assert again.hash() == cfg.hash()
    path = tmp_path / "soup.cfg"
    path.write_text("# comment line\n" + text)
    assert ExperimentConfig.load(str(path)).hash() == cfg.hash()
    assert cfg.with_values(seed=1).hash() != cfg.hash()


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig("nonsense")
    with pytest.raises(ConfigError):
        ExperimentConfig("soup").with_values(unknown_key=1)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("experiment = soup\nthis line has no equals sign\n")
    with pytest.raises(ConfigError):
        run(ExperimentConfig("soup").with_values(reps=0))
    with pytest.raises(ConfigError):
        run(ExperimentConfig("soup").with_values(reps=10, mode="nope"))


def _small_soup():
    return ExperimentConfig("soup").with_values(reps=200, N=4)


def test_run_deterministic():
    a, b = run(_small_soup()), run(_small_soup())
    assert a.rows == b.rows
    assert a.summary == b.summary
    assert a.criteria == b.criteria
    assert a.config_hash == b.config_hash
    assert run(_small_soup().with_values(seed=5)).summary != a.summary


def test_outputs_written(tmp_path):
    rec = run(_small_soup(), str(tmp_path))
    with open(tmp_path / "soup.json") as fh:
        payload = json.load(fh)
    assert payload["config_hash"] == rec.config_hash
    assert payload["criteria"] == rec.criteria
    assert payload["config"]["reps"] == "200"
    lines = (tmp_path / "soup.csv").read_text().splitlines()
    assert lines[0].split(",") == ["replica", "mean_density", "loops"]
    assert len(lines) == 201


def test_thermo_experiment_passes():
    rec = run(ExperimentConfig("thermo"))
    assert rec.passed
    assert set(rec.criteria) == {"rho_c_agreement", "tail_scaling", "long_loop_mass_scaling"}


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["thermo", "--out", str(tmp_path)]) == 0
    assert "PASS  rho_c_agreement" in capsys.readouterr().out
    assert os.path.exists(tmp_path / "thermo.json")
    assert cli.main(["thermo", "--set", "tail_tol=0"]) == 1
    assert cli.main(["thermo", "--set", "nonsense=1"]) == 2
    assert cli.main(["no-such-experiment"]) == 2
    assert cli.main(["thermo", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_config_file(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text(_small_soup().to_text())
    assert cli.main(["soup", "--config", str(path), "--seed", "3", "--out", str(tmp_path)]) in (0, 1)
    with open(tmp_path / "soup.json") as fh:
        assert json.load(fh)["config"]["seed"] == "3"
    assert cli.main(["thermo", "--config", str(path)]) == 2
