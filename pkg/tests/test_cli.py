"""
Tests for the command-line surface and its exit codes.
"""

import logging
import sys

import app
import config
from src.services.csv_service import CSVService
from src.ui.cli import dispatch

DIVERGENT_OU = """
model = "ou"
theta_star = 0.031
c_alpha = 0.01
dt = 0.1
t_end = 100.0
"""


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_unknown_subcommand_exits_1(capsys):
    assert dispatch(["frobnicate"]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_missing_subcommand_exits_1():
    assert dispatch([]) == 1


def test_help_exits_0():
    assert dispatch(["--help"]) == 0


def test_missing_config_file_exits_1(tmp_path):
    assert dispatch(["variance", "--config", str(tmp_path / "absent.toml"), "--out", str(tmp_path)]) == 1


def test_unknown_preset_exits_1(tmp_path):
    assert dispatch(["preset", "example9", "--out", str(tmp_path)]) == 1


def test_divergent_variance_exits_0(tmp_path, write_config, capsys):
    path = write_config(DIVERGENT_OU)
    assert dispatch(["variance", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
    frame = CSVService.load(tmp_path / "out" / "variance.csv")
    assert frame["regime"].iloc[0] == "divergent"
    out = capsys.readouterr().out
    assert out.startswith("model,theta_star,c_alpha,c_gbar,h_bar,sigma_bar,regime")
    assert "divergent" in out.splitlines()[1]
    assert "wrote 1 file(s)" in out


def test_poisson_subcommand(tmp_path, write_config):
    path = write_config(DIVERGENT_OU)
    assert dispatch(["poisson", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "poisson.csv").exists()


def test_malliavin_with_too_few_paths_exits_1(tmp_path, write_config):
    path = write_config(DIVERGENT_OU + "n_paths = 10\n")
    assert dispatch(["malliavin", "--config", str(path), "--out", str(tmp_path / "out")]) == 1


def test_non_finite_paths_exit_2(tmp_path, write_config):
    path = write_config("""
model = "cubic"
theta_star = 0.035
c_alpha = 1.0
dt = 10.0
t_end = 100.0
n_paths = 4
x0 = 100.0
snapshots = [100.0]
""")
    assert dispatch(["simulate", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert (tmp_path / "out" / "c_alpha_1" / "snapshots.csv").exists()


def test_overrides_reach_the_header(tmp_path, write_config):
    path = write_config(DIVERGENT_OU)
    out = tmp_path / "out"
    args = ["simulate", "--config", str(path), "--out", str(out), "--paths", "3", "--seed", "9", "--t-end", "20"]
    assert dispatch(args) == 0
    header = CSVService.read_header(out / "c_alpha_0.01" / "snapshots.csv")
    assert header["n_paths"] == 3
    assert header["master_seed"] == 9
    assert header["t_end"] == 20.0


def test_invalid_flag_value_exits_1(tmp_path, write_config):
    path = write_config(DIVERGENT_OU)
    assert dispatch(["simulate", "--config", str(path), "--paths", "many"]) == 1


def test_preset_runs_are_byte_identical(tmp_path):
    common = ["preset", "example1", "--paths", "20", "--seed", "7", "--t-end", "50"]
    assert dispatch(common + ["--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert dispatch(common + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    assert dispatch(common + ["--out", str(tmp_path / "c"), "--workers", "1"]) == 0
    a = _tree(tmp_path / "a")
    assert any(p.name == "summary.csv" for p in a)
    assert len(a) == 9
    assert a == _tree(tmp_path / "b") == _tree(tmp_path / "c")


def test_entry_point_writes_only_under_out(tmp_path, write_config, monkeypatch):
    path = write_config(DIVERGENT_OU)
    before = set(tmp_path.rglob("*"))
    out_dir = tmp_path / "out"
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(config, "LOG_DIR", None)
    monkeypatch.setattr(sys, "argv", ["app.py", "variance", "--config", str(path), "--out", str(out_dir)])

    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    try:
        assert app.main() == 0
    finally:
        for handler in root.handlers:
            if handler not in handlers:
                handler.close()
        root.handlers[:] = handlers
        root.setLevel(level)

    created = set(tmp_path.rglob("*")) - before
    assert created
    assert all(p == out_dir or out_dir in p.parents for p in created)
    assert list((out_dir / "logs").glob("sgdct_*.log"))


def test_explicit_log_dir_wins(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "LOG_DIR", tmp_path / "elsewhere")
    assert config.log_dir_for(tmp_path / "out") == tmp_path / "elsewhere"
    monkeypatch.setattr(config, "LOG_DIR", None)
    assert config.log_dir_for(tmp_path / "out") == tmp_path / "out" / "logs"
