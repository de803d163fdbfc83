"""
Tests for Malliavin derivative propagation and moment scaling.
"""

import numpy as np
import pytest

from src.models.constants import ModelKind
from src.models.drift import BuiltinModel, GPartials
from src.models.errors import ConfigurationError, SequencingError
from src.models.results import AnchorSet
from src.models.simulation import SimConfig
from src.services.density_service import DensityService
from src.services.malliavin_service import MalliavinService, _advance_second
from src.services.poisson_service import PoissonService
from src.services.simulation_service import SimulationService


def _stored(model, **kwargs):
    params = dict(dt=0.1, c_alpha=1.0, n_paths=2, master_seed=9, store_full=(0, 1))
    params.update(kwargs)
    params.setdefault("snapshot_times", (params["t_end"],))
    cfg = SimConfig(**params)
    ensemble = SimulationService.run_ensemble(model, cfg)
    return cfg, [ensemble.full[i] for i in cfg.store_full]


def test_ou_data_derivative_is_exponential():
    model = BuiltinModel(ModelKind.OU, theta_star=0.5).build()
    cfg, paths = _stored(model, t_end=20.0, x0=0.3, theta0=0.2)
    d = MalliavinService.propagate_first(paths, model, 5.0, cfg)
    expected = np.exp(-0.5 * (d.times - 5.0))
    assert d.dx == pytest.approx(np.repeat(expected[:, None], 2, axis=1), rel=1e-12)


def test_parameter_derivative_starts_at_scaled_gradient(cubic_example):
    cfg, paths = _stored(cubic_example, t_end=10.0, x0=0.5, theta0=0.1, c_alpha=0.011)
    d = MalliavinService.propagate_first(paths, cubic_example, 2.0, cfg)
    k = cfg.step_index(2.0)
    for j, path in enumerate(paths):
        expected = cfg.alpha(2.0) * cubic_example.f_theta(path.x[k], path.theta[k])
        assert d.dtheta[0, j] == pytest.approx(float(expected), rel=1e-15)
    assert np.all(d.dx > 0)


def test_x_independent_parameter_derivative_closed_form(x_independent):
    cfg, paths = _stored(x_independent, dt=0.01, t_end=1000.0, t_start=100.0, c0=0.0, n_paths=1, store_full=(0,))
    d = MalliavinService.propagate_first(paths, x_independent, 100.0, cfg)
    assert d.dtheta[-1, 0] == pytest.approx(1e-3, rel=0.01)


def test_x_independent_second_derivative_vanishes(x_independent):
    cfg, paths = _stored(x_independent, t_end=50.0)
    trajectory = MalliavinService.propagate(
        paths, x_independent, AnchorSet(anchors=(2.0,), pairs=((2.0, 2.0), (2.0, 4.0))), cfg)
    for second in trajectory.second.values():
        assert np.all(second.d2theta == 0.0)
        assert np.all(second.d2x == 0.0)


def test_ou_second_data_derivative_vanishes(ou_unit):
    cfg, paths = _stored(ou_unit, t_end=10.0, x0=1.0, theta0=0.5)
    trajectory = MalliavinService.propagate(paths, ou_unit, AnchorSet(pairs=((2.0, 3.0),)), cfg)
    assert np.all(trajectory.second[(2.0, 3.0)].d2x == 0.0)


def test_pair_order_does_not_matter(cubic_example):
    cfg, paths = _stored(cubic_example, t_end=10.0, x0=0.5, theta0=0.1, c_alpha=0.011)
    first = MalliavinService.propagate(paths, cubic_example, AnchorSet(anchors=(2.0, 5.0)), cfg).first
    a = MalliavinService.propagate_second(paths, first, cubic_example, 2.0, 5.0, cfg)
    b = MalliavinService.propagate_second(paths, first, cubic_example, 5.0, 2.0, cfg)
    assert (a.r1, a.r2) == (b.r1, b.r2) == (2.0, 5.0)
    assert np.array_equal(a.d2theta, b.d2theta)
    assert np.array_equal(a.d2x, b.d2x)


def test_cubic_second_derivative_initial_values(cubic_example):
    cfg, paths = _stored(cubic_example, t_end=10.0, x0=0.5, theta0=0.1, c_alpha=0.011)
    trajectory = MalliavinService.propagate(
        paths, cubic_example, AnchorSet(pairs=((3.0, 3.0), (2.0, 3.0))), cfg)
    k = cfg.step_index(3.0)
    x_r = np.array([p.x[k] for p in paths])
    alpha = cfg.alpha(3.0)
    same = trajectory.second[(3.0, 3.0)]
    assert same.d2theta[0] == pytest.approx(-6.0 * alpha * x_r ** 2, rel=1e-12)
    mixed = trajectory.second[(2.0, 3.0)]
    dx1 = trajectory.first[2.0].dx[cfg.step_index(3.0) - cfg.step_index(2.0)]
    assert mixed.d2theta[0] == pytest.approx(-3.0 * alpha * x_r ** 2 * dx1, rel=1e-12)


def test_missing_first_order_raises(cubic_example):
    cfg, paths = _stored(cubic_example, t_end=10.0, c_alpha=0.011)
    with pytest.raises(SequencingError):
        MalliavinService.propagate_second(paths, {}, cubic_example, 2.0, 3.0, cfg)


@pytest.mark.parametrize("anchor", [0.5, 2.05, 20.0])
def test_invalid_anchor_raises(ou_unit, anchor):
    cfg, paths = _stored(ou_unit, t_end=10.0)
    with pytest.raises(ConfigurationError, match="anchors"):
        MalliavinService.propagate_first(paths, ou_unit, anchor, cfg)


def test_default_anchors_lie_on_grid():
    cfg = SimConfig(dt=0.1, t_end=6400.0, c_alpha=1.0, n_paths=1, master_seed=0, snapshot_times=(6400.0,))
    anchors = MalliavinService.default_anchors(cfg)
    assert anchors.anchors == (100.0, 400.0, 1600.0)
    assert (100.0, 200.0) in anchors.pairs
    assert (1600.0, 1600.0) in anchors.pairs


def test_replay_matches_stored_propagation(cubic_example):
    cfg = SimConfig(dt=0.1, t_end=20.0, c_alpha=0.011, n_paths=2, master_seed=4,
                    snapshot_times=(20.0,), x0=0.5, theta0=0.1, store_full=(0, 1))
    paths = [SimulationService.run_ensemble(cubic_example, cfg).full[i] for i in (0, 1)]
    stored = MalliavinService.propagate(paths, cubic_example, AnchorSet(pairs=((2.0, 4.0),)), cfg)
    record = [cfg.step_index(t) for t in (10.0, 20.0)]
    out_first, out_second, flagged = MalliavinService._replay_chunk(
        cubic_example, cfg, [0, 1], [cfg.step_index(2.0), cfg.step_index(4.0)],
        [(cfg.step_index(2.0), cfg.step_index(4.0))], record)
    assert not flagged.any()
    k2 = cfg.step_index(2.0)
    expected_first = stored.first[2.0].dtheta[[k - k2 for k in record]]
    assert out_first[k2] == pytest.approx(expected_first, rel=1e-10)
    k4 = cfg.step_index(4.0)
    expected_second = stored.second[(2.0, 4.0)].d2theta[[k - k4 for k in record]]
    assert out_second[(k2, k4)] == pytest.approx(expected_second, rel=1e-10)


def _x_independent_moment_config(n_paths=200):
    return SimConfig(dt=0.5, t_end=1000.0, c_alpha=1.0, c0=0.0, t_start=1.0, n_paths=n_paths,
                     master_seed=1, snapshot_times=(1000.0,))


def test_x_independent_moment_slope(x_independent):
    cfg = _x_independent_moment_config()
    series = MalliavinService.moment_scaling(
        x_independent, cfg, AnchorSet(anchors=(100.0,)), p=1, order=1, c_gbar=1.0,
        times=(200.0, 300.0, 400.0, 600.0, 800.0, 1000.0))
    assert len(series) == 1
    moment = series[0]
    assert moment.predicted_exponent == pytest.approx(-2.0)
    assert moment.series.slope == pytest.approx(-2.0, abs=0.02)
    assert moment.series.values[-1] == pytest.approx(1e-6, rel=0.02)


def test_single_time_leaves_slope_unfitted(x_independent):
    cfg = _x_independent_moment_config()
    series = MalliavinService.moment_scaling(
        x_independent, cfg, AnchorSet(anchors=(100.0,)), p=1, order=1, c_gbar=1.0, times=(1000.0,))
    assert series[0].series.slope is None
    assert series[0].series.values.shape == (1,)


@pytest.mark.parametrize("kwargs, match", [
    ({"order": 3}, "order"),
    ({"p": 0}, "p"),
    ({"n_paths": 50}, "n_paths"),
])
def test_moment_scaling_rejects_bad_arguments(x_independent, kwargs, match):
    kwargs = dict(kwargs)
    cfg = _x_independent_moment_config(n_paths=kwargs.pop("n_paths", 200))
    args = dict(p=1, order=1)
    args.update(kwargs)
    with pytest.raises(ConfigurationError, match=match):
        MalliavinService.moment_scaling(x_independent, cfg, AnchorSet(anchors=(100.0,)), c_gbar=1.0,
                                        times=(1000.0,), **args)


@pytest.mark.slow
def test_ou_moment_slope_matches_prediction(ou_example):
    density = DensityService.auto_density(ou_example)
    c_gbar = PoissonService.gbar(ou_example, density, 0.031, 2)
    cfg = SimConfig(dt=0.1, t_end=7000.0, c_alpha=0.045, n_paths=1000, master_seed=0,
                    snapshot_times=(7000.0,))
    series = MalliavinService.moment_scaling(
        ou_example, cfg, AnchorSet(anchors=(437.5,)), p=1, order=1, c_gbar=c_gbar, workers=2)
    assert series[0].predicted_exponent == pytest.approx(-1.452, abs=0.001)
    assert series[0].series.slope == pytest.approx(-1.452, abs=0.15)


def test_pair_grid_starts_after_late_anchor():
    cfg = SimConfig(dt=0.2, t_end=200.0, c_alpha=1.0, n_paths=1, master_seed=0, snapshot_times=(200.0,))
    times = MalliavinService.series_times(cfg, 100.0, 16)
    assert len(times) >= 3
    assert times[0] == pytest.approx(150.0)
    assert times[-1] == pytest.approx(200.0)
    assert MalliavinService.series_times(cfg, 200.0) == ()
    assert MalliavinService.series_times(cfg, 25.0, 16)[0] == pytest.approx(50.0)


def test_second_order_moments_fit_with_default_pairs(ou_unit):
    cfg = SimConfig(dt=0.2, t_end=200.0, c_alpha=1.0, n_paths=200, master_seed=4,
                    snapshot_times=(200.0,))
    anchors = MalliavinService.default_anchors(cfg)
    assert any(pair == pytest.approx((50.0, 100.0)) for pair in anchors.pairs)
    assert len(MalliavinService.moment_times(cfg, anchors, 2)) > 1

    series = MalliavinService.moment_scaling(ou_unit, cfg, anchors, p=1, order=2, c_gbar=1.0, workers=2)
    assert len(series) == len(anchors.pairs)
    for moment in series:
        assert moment.order == 2
        assert moment.series.times.size >= 3
        assert moment.series.times[0] > moment.r2
        assert moment.series.slope is not None
        assert np.all(moment.series.values > 0)


@pytest.mark.parametrize("dw, expected", [(0.0, 0.4), (0.2, 0.7)])
def test_second_order_step_with_curved_parameter_dependence(dw, expected):
    # f_thetatheta = 2 and Gamma^f = 2; only alpha*(f_tt D^2theta + Gamma^f) multiplies dW
    p = {"f_star_x": -1.0, "f_star_xx": 0.0, "f_xtheta": 3.0, "f_thetatheta": 2.0,
         "f_xthetatheta": 1.0, "f_thetathetatheta": 0.0, "f_xxtheta": 0.0}
    gp = GPartials(g=0.0, g_theta=0.0, g_thetatheta=4.0, g_thetathetatheta=0.0,
                   g_xtheta=0.0, g_thetathetax=0.0, g_xxtheta=0.0)
    d2x, d2theta = _advance_second(p, gp, 0.5, 0.1, dw, (1.0, 1.0), (1.0, 1.0), 0.0, 0.5)
    assert d2x == pytest.approx(0.0)
    assert d2theta == pytest.approx(expected, rel=1e-12)
