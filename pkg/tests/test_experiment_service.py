"""
Tests for presets, CSV output and the experiment bundles.
"""

import numpy as np
import pandas as pd
import pytest

from src.models.constants import ModelKind
from src.models.errors import ConfigurationError, FitError, NumericalError
from src.models.preset import PRESETS, get_preset
from src.models.results import RateSeries
from src.services.config_service import ConfigService
from src.services.csv_service import CSVService
from src.services.experiment_service import SUMMARY_COLUMNS, ExperimentService
from src.services.poisson_service import PoissonService
from src.services.stats_service import StatsService

X_INDEPENDENT = """
model = "x_independent"
theta_star = 2.3
c_alpha = [0.43, 1.0]
dt = 0.1
t_end = 50.0
n_paths = 20
seed = 7
"""


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_preset_tables():
    assert set(PRESETS) == {"example1", "example2_ou", "example3_cubic"}
    example1 = get_preset("example1")
    assert example1.model is ModelKind.X_INDEPENDENT
    assert example1.c_alphas == (0.43, 0.72, 0.78, 1.0)
    assert (example1.t_end, example1.dt, example1.n_paths) == (5000.0, 0.1, 1100)
    example2 = get_preset("example2_ou")
    assert example2.c_alphas == (0.045, 0.0496, 0.068)
    assert example2.reported_sigma_bar(0.0496) == 0.002
    example3 = get_preset("example3_cubic")
    assert example3.theta_star == 0.035
    assert example3.variance_t_end == 2000.0


def test_unknown_preset_raises():
    with pytest.raises(ConfigurationError, match="example4"):
        get_preset("example4")


def test_preset_overrides_are_limited():
    with pytest.raises(ConfigurationError):
        ExperimentService.preset_run_config(get_preset("example1"), {"theta_star": 1.0})


def test_example1_headers_explain_start_transient(tmp_path):
    bundle = ExperimentService.run_preset("example1", {"n_paths": 20, "t_end": 50.0, "seed": 7}, tmp_path, 1)
    note = get_preset("example1").note
    assert "theta0 = theta_star" in note
    assert CSVService.read_header(bundle.out_dir / "c_alpha_0.78" / "w1.csv")["note"] == note
    assert CSVService.read_header(bundle.out_dir / "summary.csv")["note"] == note


def test_preset_schedule_includes_reported_time():
    run = ExperimentService.preset_run_config(get_preset("example2_ou"))
    assert 6500.0 in run.snapshot_times()
    assert run.snapshot_times()[-1] == pytest.approx(7000.0)


def test_csv_writes_stay_inside_output_dir(tmp_path):
    with pytest.raises(ConfigurationError, match="escapes"):
        CSVService.resolve(tmp_path, "../outside.csv")


def test_csv_header_round_trip(tmp_path):
    frame = pd.DataFrame({"t": [1.0, 2.0], "value": [0.1, 1 / 3]})
    path = CSVService.write(frame, tmp_path, "sub/table.csv", {"master_seed": 5, "c_alpha": [0.5]})
    header = CSVService.read_header(path)
    assert list(header)[0] == "schema"
    assert header["master_seed"] == 5
    assert header["c_alpha"] == [0.5]
    loaded = CSVService.load(path)
    assert loaded["value"].iloc[1] == 1 / 3


def test_variance_subcommand(tmp_path, write_config):
    run = ConfigService.load(write_config(X_INDEPENDENT))
    bundle = ExperimentService.run_variance(run, tmp_path)
    frame = CSVService.load(bundle.files[0])
    assert list(frame["regime"]) == ["divergent", "convergent"]
    assert np.isnan(frame["sigma_bar"].iloc[0])
    assert frame["sigma_bar"].iloc[1] == pytest.approx(1.0)


def test_poisson_subcommand(tmp_path, write_config):
    text = X_INDEPENDENT.replace('"x_independent"', '"ou"').replace("2.3", "1.0") + "poisson_theta = 1.2\n"
    bundle = ExperimentService.run_poisson(ConfigService.load(write_config(text)), tmp_path)
    frame = CSVService.load(bundle.files[0])
    assert list(frame.columns) == ["x", "m", "H", "v", "v_x"]
    header = CSVService.read_header(bundle.files[0])
    assert header["theta"] == 1.2
    assert len(header["gbar"]) == 4
    assert header["centering_residual"] <= 1e-8


def test_simulate_subcommand(tmp_path, write_config):
    bundle = ExperimentService.run_simulate(ConfigService.load(write_config(X_INDEPENDENT)), tmp_path)
    assert len(bundle.files) == 2
    frame = CSVService.load(bundle.files[1])
    assert list(frame.columns) == ["t", "path_index", "x", "theta"]
    assert frame["path_index"].nunique() == 20


def test_bundle_layout_and_summary(tmp_path, write_config):
    run = ConfigService.load(write_config(X_INDEPENDENT))
    bundle = ExperimentService.run_bundle(run, tmp_path)
    names = {p.relative_to(tmp_path).as_posix() for p in bundle.files}
    assert names == {
        "c_alpha_0.43/w1.csv", "c_alpha_0.43/variance_series.csv",
        "c_alpha_1/w1.csv", "c_alpha_1/variance_series.csv", "summary.csv",
    }
    summary = CSVService.load(tmp_path / "summary.csv")
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert list(summary["regime"]) == ["divergent", "convergent"]
    assert summary["sigma_bar_closed_form"].iloc[1] == pytest.approx(1.0)
    # divergent target falls back to C_alpha^2 h_bar
    assert summary["gaussian_target_variance"].iloc[0] == pytest.approx(0.43 ** 2)
    header = CSVService.read_header(tmp_path / "c_alpha_1" / "w1.csv")
    assert header["master_seed"] == 7
    assert header["flagged_paths"] == 0


def test_bundle_is_reproducible(tmp_path, write_config):
    run = ConfigService.load(write_config(X_INDEPENDENT))
    ExperimentService.run_bundle(run, tmp_path / "a", workers=1)
    ExperimentService.run_bundle(run, tmp_path / "b", workers=2)
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_flagged_paths_raise_after_writing(tmp_path, write_config):
    text = """
model = "cubic"
theta_star = 0.035
c_alpha = 1.0
dt = 10.0
t_end = 100.0
n_paths = 4
x0 = 100.0
snapshots = [100.0]
"""
    run = ConfigService.load(write_config(text))
    with pytest.raises(NumericalError):
        ExperimentService.run_simulate(run, tmp_path)
    assert (tmp_path / "c_alpha_1" / "snapshots.csv").exists()


def test_malliavin_subcommand_writes_moments(tmp_path, write_config):
    text = """
model = "x_independent"
theta_star = 2.3
c_alpha = 1.0
c0 = 0.0
t_start = 1.0
dt = 0.5
t_end = 1000.0
n_paths = 200

[malliavin]
anchors = [100.0]
pairs = [[100.0, 100.0]]
p = [1]
order = [1]
n_times = 8
"""
    bundle = ExperimentService.run_malliavin(ConfigService.load(write_config(text)), tmp_path)
    frame = CSVService.load(bundle.files[0])
    assert set(frame["order"]) == {1}
    assert frame["fitted_slope"].iloc[0] == pytest.approx(-2.0, abs=0.02)
    assert frame["predicted_exponent"].iloc[0] == pytest.approx(-2.0)


def test_malliavin_subcommand_reports_failed_fits(tmp_path, write_config):
    text = """
model = "x_independent"
theta_star = 2.3
c_alpha = 1.0
dt = 0.5
t_end = 20.0
n_paths = 200

[malliavin]
anchors = [10.0]
p = [1]
n_times = 1
"""
    with pytest.raises(FitError):
        ExperimentService.run_malliavin(ConfigService.load(write_config(text)), tmp_path)
    assert (tmp_path / "c_alpha_1" / "malliavin.csv").exists()


def test_malliavin_second_order_default_pairs_fit(tmp_path, write_config):
    text = """
model = "ou"
theta_star = 1.0
c_alpha = 1.0
dt = 0.2
t_end = 200.0
n_paths = 200

[malliavin]
p = [1]
order = [2]
"""
    bundle = ExperimentService.run_malliavin(ConfigService.load(write_config(text)), tmp_path)
    frame = CSVService.load(bundle.files[0])
    assert set(frame["order"]) == {2}
    assert frame["fitted_slope"].notna().all()
    assert (frame["t"] > frame["r2"]).all()


def test_example3_products():
    run = ExperimentService.preset_run_config(get_preset("example3_cubic"))
    model, density = ExperimentService.model_and_density(run)
    c_gbar = PoissonService.gbar(model, density, run.theta_star, 2)
    products = [c_gbar * c for c in run.c_alphas]
    assert products[0] == pytest.approx(1.01, abs=0.01)
    assert products[1] == pytest.approx(1.21, abs=0.01)
    assert all(p > 0.75 for p in products)


@pytest.mark.slow
def test_example1_rates(tmp_path, write_config):
    # started at the optimum: from theta0 = 0 the deterministic transient
    # sqrt(t) * 2.3 * t^-0.78 still dominates W1 at t = 5000 for C_alpha = 0.78
    text = """
model = "x_independent"
theta_star = 2.3
theta0 = 2.3
c_alpha = [0.43, 0.78, 1.0]
dt = 0.1
t_end = 5000.0
n_paths = 1100
snapshots = "log:40:10:5000"
"""
    bundle = ExperimentService.run_custom(write_config(text), out_dir=tmp_path, workers=2)
    summary = bundle.summary.set_index("c_alpha")
    for c_alpha in (0.78, 1.0):
        assert summary.loc[c_alpha, "log_w1_over_log_t_final"] < -0.25
    w1 = CSVService.load(tmp_path / "c_alpha_0.43" / "w1.csv")
    series = RateSeries(w1["t"].to_numpy(), w1["w1_quantile"].to_numpy())
    assert StatsService.rate_fit(series, window=(500.0, 5000.0)) >= -0.05
    assert bool(summary.loc[0.43, "w1_non_decaying"])
