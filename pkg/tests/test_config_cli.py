"""Configuration parsing and the command-line entry points."""

import csv
import os

import pytest

from supctrl import cli
from supctrl.config import load_config, parse_config
from supctrl.errors import ConfigError, UnsupportedModelError

CONFIG = "configs/gbm_example.cfg"


# -- config parsing ----------------------------------------------------------- #

def test_parse_roundtrip():
    cfg = parse_config("model.kind = gbm\nmodel.r = 0.05\n# comment\n")
    assert cfg.get("model.kind") == "gbm"
    assert cfg.get_float("model.r") == pytest.approx(0.05)


def test_parse_inf():
    cfg = parse_config("model.b = inf\n")
    assert cfg.get_float("model.b") == float("inf")


@pytest.mark.parametrize("text,fragment", [
    ("model.kind gbm\n", "expected"),
    ("nokey = 1\n", "section.key"),
    ("bogus.key = 1\n", "unknown section"),
    ("model.r = 0.05\nmodel.r = 0.06\n", "duplicate"),
])
def test_parse_errors_carry_line_info(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_get_typed_accessors():
    cfg = parse_config("simulation.paths = 100\nsimulation.antithetic = true\n")
    assert cfg.get_int("simulation.paths") == 100
    assert cfg.get_bool("simulation.antithetic") is True
    assert cfg.get_float("simulation.dt", 1e-3) == pytest.approx(1e-3)


def test_build_rejects_subcritical_rate():
    cfg = parse_config("model.kind = gbm\nmodel.mu = 0.05\nmodel.sigma = 0.1\n"
                       "model.r = 0.01\npayoff.eta = 0.5\npayoff.K1 = 12\n"
                       "payoff.K2 = 10\npayoff.nu = 0.1\n")
    with pytest.raises(UnsupportedModelError):
        cfg.build_problem()


def test_example_config_builds(config):
    problem = config.build_problem()
    assert problem.spec.rate == pytest.approx(0.05)
    sim = config.build_sim_config(paths=10)
    assert sim.n_paths == 10


# -- CLI ---------------------------------------------------------------------- #

def test_cli_solve(tmp_path, capsys):
    rc = cli.main(["solve", "--config", CONFIG, "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "y_star = 1.38557359785" in out
    assert (tmp_path / "solve_report.txt").exists()


def test_cli_figure1(tmp_path, capsys):
    rc = cli.main(["figure1", "--config", CONFIG, "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    path = tmp_path / "figure1.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "f_optimal", "f_low", "f_high"]
    assert len(rows) == 401
    # the optimal-threshold column is nonnegative, the perturbed ones dip below 0
    f_opt = [float(r[1]) for r in rows[1:]]
    f_low = [float(r[2]) for r in rows[1:]]
    f_high = [float(r[3]) for r in rows[1:]]
    assert min(f_opt) >= -1e-10
    assert min(f_low) < -1e-3 and min(f_high) < -1e-3


def test_cli_verify_skip_mc(capsys):
    rc = cli.main(["verify", "--config", CONFIG, "--skip-mc"])
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.count("PASS") >= 8


def test_cli_verify_detects_injected_fault(capsys):
    rc = cli.main(["verify", "--config", CONFIG, "--skip-mc",
                   "--debug-kappa-perturb", "0.01"])
    assert rc == cli.EXIT_NUMERIC
    assert "FAIL" in capsys.readouterr().out


def test_cli_rejects_misordered_payoff(tmp_path, capsys):
    with open(CONFIG) as fh:
        text = fh.read().replace("payoff.K2 = 10", "payoff.K2 = 15")
    bad = tmp_path / "bad.cfg"
    bad.write_text(text)
    rc = cli.main(["solve", "--config", str(bad)])
    assert rc == cli.EXIT_ASSUMPTION
    assert "assumption violation" in capsys.readouterr().err


def test_cli_rejects_unsupported_regime(tmp_path, capsys):
    with open(CONFIG) as fh:
        text = fh.read().replace("model.r = 0.05", "model.r = 0.005")
    bad = tmp_path / "bad.cfg"
    bad.write_text(text)
    rc = cli.main(["solve", "--config", str(bad)])
    assert rc == cli.EXIT_ASSUMPTION


def test_cli_rejects_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model r 0.05\n")
    rc = cli.main(["solve", "--config", str(bad)])
    assert rc == cli.EXIT_ASSUMPTION


def test_threads_env_variable_roundtrip(monkeypatch):
    monkeypatch.setenv("SUPCTRL_THREADS", "2")
    from supctrl.montecarlo import _configure_threads
    _configure_threads()
