import json
import subprocess
import sys

import pytest

from fsi_fem.cli import ConfigError, main, parse_config


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_defaults():
    cfg = parse_config({"mode": "run", "case": "heat_wave", "h": 0.25, "tau": 0.1})
    assert cfg.element == "p1" and cfg.T == 0.25 and cfg.tol == 0.25
    assert parse_config({"mode": "run", "case": "channel_periodic", "h": 0.25, "tau": 0.1}).element == "mini"


@pytest.mark.parametrize("raw, field", [
    ({"case": "heat_wave"}, "mode"),
    ({"mode": "run", "case": "nope"}, "case"),
    ({"mode": "run", "case": "heat_wave", "h": 0.1, "tau": -1}, "tau"),
    ({"mode": "run", "case": "heat_wave", "h": 0.1, "tau": 0.1, "bogus": 1}, "bogus"),
    ({"mode": "run", "case": "heat_wave", "element": "mini", "h": 0.1, "tau": 0.1}, "element"),
    ({"mode": "run", "case": "heat_wave", "h": 0.1, "tau": 0.1, "tau_list": [0.1, 0.2]}, "tau_list"),
    ({"mode": "convergence_space", "case": "heat_wave", "h_list": [0.1], "tau": 0.1}, "h_list"),
    ({"mode": "convergence_time", "case": "heat_wave", "h": 0.1, "tau_list": [0.1]}, "tau_list"),
    ({"mode": "ritz", "case": "channel_traction", "h_list": [0.1, 0.05]}, "case"),
    ({"mode": "run", "case": "channel_periodic", "length": 1.5, "h": 0.1, "tau": 0.1}, "length"),
    ({"mode": "self_convergence", "case": "channel_periodic", "tau": 0.01, "h_list": [0.25, 0.1],
      "reference_h": 0.05}, "h_list"),
])
def test_config_errors_name_field(raw, field):
    with pytest.raises(ConfigError, match=f"^{field}:"):
        parse_config(raw)


def test_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(str(p))


def test_run_subcommand(tmp_path, capsys):
    cfg = write(tmp_path, {"mode": "run", "case": "heat_wave", "h": 0.25, "tau": 0.05, "T": 0.1})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "run.csv").read_text().splitlines()
    assert lines[0].startswith("step,t,err_u_L2") and len(lines) == 4
    summary = json.loads((tmp_path / "o" / "run.json").read_text())
    assert summary["steps"] == 2 and summary["h"] == 0.25


def test_mode_mismatch_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, {"mode": "run", "case": "heat_wave", "h": 0.25, "tau": 0.05})
    assert main(["ritz", "--config", cfg]) == 2
    assert "mode" in capsys.readouterr().err


def test_invalid_config_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, {"mode": "run", "case": "heat_wave"})
    assert main(["run", "--config", cfg]) == 2
    assert "error: h:" in capsys.readouterr().err


def test_verify_sources_subcommand(tmp_path):
    cfg = write(tmp_path, {"mode": "verify_sources", "case": "channel_periodic", "n_samples": 20})
    assert main(["verify-sources", "--config", cfg, "--out", str(tmp_path), "--seed", "7"]) == 0
    rep = json.loads((tmp_path / "verify_sources.json").read_text())
    assert rep["pass"] and rep["seed"] == 7


def test_convergence_space_subcommand(tmp_path):
    cfg = write(tmp_path, {"mode": "convergence_space", "case": "heat_wave", "element": "p2",
                           "h_list": [0.25, 0.125], "tau": 0.01, "T": 0.05})
    code = main(["convergence", "--config", cfg, "--out", str(tmp_path), "--jobs", "2"])
    summary = json.loads((tmp_path / "convergence_space.json").read_text())
    assert set(summary["gates"]) == {"err_u_L2", "err_eta_L2", "err_eta_H1"}
    assert code == (0 if summary["pass"] else 1)
    assert len((tmp_path / "convergence_space.csv").read_text().splitlines()) == 3


def test_ritz_subcommand(tmp_path):
    cfg = write(tmp_path, {"mode": "ritz", "case": "channel_periodic", "h_list": [0.25, 0.125], "T": 0.05})
    code = main(["ritz", "--config", cfg, "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "ritz.json").read_text())
    assert code == (0 if rep["pass"] else 1)
    assert (tmp_path / "ritz.csv").read_text().startswith("h,sup_err_u_L2")


def test_self_convergence_subcommand(tmp_path):
    cfg = write(tmp_path, {"mode": "self_convergence", "case": "channel_periodic", "h_list": [0.5, 0.25],
                           "reference_h": 0.125, "tau": 0.01, "T": 0.02})
    code = main(["self-convergence", "--config", cfg, "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "self_convergence.json").read_text())
    assert code in (0, 1) and code == (0 if rep["pass"] else 1)
    assert len((tmp_path / "self_convergence.csv").read_text().splitlines()) == 3


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"mode": "verify_sources", "case": "heat_wave", "n_samples": 10})
    r = subprocess.run([sys.executable, "-m", "fsi_fem", "verify-sources", "--config", cfg, "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
