"""
Tests for fluctuation statistics, W1 distances and rate fits.
"""

import numpy as np
import pytest

from src.models.constants import W1Mode
from src.models.errors import DomainError, FitError, SampleSizeError
from src.models.results import RateSeries
from src.models.simulation import PathEnsemble, SimConfig
from src.services.stats_service import StatsService


def _ensemble(theta_row, t=4.0, flagged=None):
    theta_row = np.asarray(theta_row, dtype=float)
    n = theta_row.size
    cfg = SimConfig(dt=1.0, t_end=t, c_alpha=1.0, n_paths=n, master_seed=0, snapshot_times=(t,))
    return PathEnsemble(
        config=cfg, snapshot_times=np.array([t]), theta=theta_row[None, :], x=np.zeros((1, n)),
        seeds=np.zeros(n, dtype=np.uint64),
        flagged=np.zeros(n, dtype=bool) if flagged is None else np.asarray(flagged),
    )


@pytest.mark.parametrize("a, b, expected", [
    ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 0.0),
    ([0.0, 0.0], [1.0, 1.0], 1.0),
    ([3.0, 1.0, 2.0], [2.0, 3.0, 1.0], 0.0),
])
def test_w1_examples(a, b, expected):
    assert StatsService.w1_empirical(a, b) == pytest.approx(expected)


def test_w1_shift():
    rng = np.random.default_rng(0)
    a = rng.normal(size=100)
    assert StatsService.w1_empirical(a, a + 0.7) == pytest.approx(0.7)


def test_w1_metric_properties():
    rng = np.random.default_rng(1)
    for _ in range(500):
        a, b, c = rng.normal(size=(3, 20))
        ab = StatsService.w1_empirical(a, b)
        assert ab >= 0
        assert ab == pytest.approx(StatsService.w1_empirical(b, a))
        assert ab <= StatsService.w1_empirical(a, c) + StatsService.w1_empirical(c, b) + 1e-12


def test_w1_size_mismatch_raises():
    with pytest.raises(SampleSizeError):
        StatsService.w1_empirical([1.0, 2.0], [1.0])


def test_quantile_w1_of_gaussian_sample():
    sample = np.random.default_rng(2).standard_normal(10_000)
    assert StatsService.w1_vs_gaussian(sample, 0.0, 1.0, mode=W1Mode.QUANTILE) <= 0.03


def test_quantile_w1_of_degenerate_sample():
    value = StatsService.w1_vs_gaussian(np.zeros(10_000), 0.0, 1.0, mode=W1Mode.QUANTILE)
    assert value == pytest.approx(np.sqrt(2 / np.pi), abs=1e-3)


def test_paired_w1_of_reference_sample_is_zero():
    reference = StatsService.gaussian_reference(500, 0.0, 2.0, seed=3)
    assert StatsService.w1_vs_gaussian(reference, 0.0, 2.0, seed=3) == 0.0


def test_paired_and_quantile_agree():
    sample = np.random.default_rng(4).normal(0.0, 1.5, size=10_000)
    paired = StatsService.w1_vs_gaussian(sample, 0.0, 2.25, mode=W1Mode.PAIRED_EMPIRICAL, seed=0)
    quantile = StatsService.w1_vs_gaussian(sample, 0.0, 2.25, mode=W1Mode.QUANTILE)
    assert abs(paired - quantile) <= 0.03


def test_reference_sample_is_reproducible():
    a = StatsService.gaussian_reference(10, 0.0, 1.0, seed=5)
    b = StatsService.gaussian_reference(10, 0.0, 1.0, seed=5)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("variance", [0.0, -1.0])
def test_nonpositive_target_variance_raises(variance):
    with pytest.raises(DomainError):
        StatsService.w1_vs_gaussian([0.0, 1.0], 0.0, variance)


def test_fluctuation_stats_two_point_sample():
    t, theta_star = 4.0, 2.0
    theta = [theta_star + 1 / np.sqrt(t), theta_star - 1 / np.sqrt(t)]
    stats = StatsService.fluctuation_stats(_ensemble(theta, t), theta_star, t)
    assert stats.f_sample == pytest.approx([1.0, -1.0])
    assert stats.t_var == pytest.approx(2.0)
    assert stats.mean_f == pytest.approx(0.0)


def test_fluctuation_stats_at_optimum():
    stats = StatsService.fluctuation_stats(_ensemble([2.0, 2.0, 2.0]), 2.0, 4.0)
    assert np.all(stats.f_sample == 0.0)
    assert stats.t_var == 0.0


def test_fluctuation_stats_ignore_path_order():
    theta = np.random.default_rng(6).normal(size=50)
    a = StatsService.fluctuation_stats(_ensemble(theta), 0.0, 4.0)
    b = StatsService.fluctuation_stats(_ensemble(theta[::-1]), 0.0, 4.0)
    assert a.t_var == pytest.approx(b.t_var, rel=1e-12)


def test_fluctuation_stats_exclude_flagged_paths():
    stats = StatsService.fluctuation_stats(_ensemble([1.0, 3.0, np.nan], flagged=[False, False, True]), 2.0, 4.0)
    assert stats.n_paths == 2
    assert stats.t_var == pytest.approx(8.0)


def test_fluctuation_stats_need_two_paths():
    with pytest.raises(SampleSizeError):
        StatsService.fluctuation_stats(_ensemble([1.0, np.nan], flagged=[False, True]), 2.0, 4.0)


def test_jackknife_matches_standard_error():
    values = np.random.default_rng(7).normal(size=200)
    mean, se = StatsService.jackknife_mean(values)
    assert mean == pytest.approx(values.mean())
    assert se == pytest.approx(values.std(ddof=1) / np.sqrt(values.size), rel=1e-10)


def test_rate_fit_of_power_law():
    t = np.geomspace(10, 5000, 20)
    assert StatsService.rate_fit(RateSeries(t, t ** -0.25)) == pytest.approx(-0.25, abs=1e-12)


def test_rate_fit_of_constant():
    t = np.geomspace(10, 5000, 20)
    assert StatsService.rate_fit(RateSeries(t, np.full(t.size, 3.0))) == pytest.approx(0.0, abs=1e-12)


def test_rate_fit_of_perturbed_power_law():
    t = np.geomspace(10, 5000, 20)
    noise = 1 + 0.01 * np.random.default_rng(8).uniform(-1, 1, t.size)
    assert StatsService.rate_fit(RateSeries(t, t ** -0.25 * noise)) == pytest.approx(-0.25, abs=0.02)


def test_rate_fit_respects_window():
    t = np.array([1.0, 2.0, 10.0, 20.0, 40.0])
    values = np.array([1.0, 1.0, 10.0 ** -0.5, 20.0 ** -0.5, 40.0 ** -0.5])
    fitted = StatsService.fit_series(RateSeries(t, values), window=(10.0, 40.0))
    assert fitted.slope == pytest.approx(-0.5)
    assert fitted.window == (10.0, 40.0)


@pytest.mark.parametrize("times, values", [
    ([1.0, 2.0], [1.0, 0.5]),
    ([1.0, 2.0, 3.0], [1.0, 0.0, 0.5]),
    ([1.0, 2.0, 3.0], [1.0, -1.0, 0.5]),
])
def test_rate_fit_failures(times, values):
    with pytest.raises(FitError):
        StatsService.rate_fit(RateSeries(np.array(times), np.array(values)), window=(1.0, 3.0))


def test_rate_series_rejects_unsorted_times():
    with pytest.raises(FitError):
        RateSeries(np.array([2.0, 1.0]), np.array([1.0, 1.0]))


def test_w1_frame_columns():
    theta = np.random.default_rng(9).normal(size=40)
    frame = StatsService.w1_frame(_ensemble(theta), 0.0, 4.0, W1Mode.QUANTILE, seed=0)
    assert list(frame.columns) == ["t", "w1_paired", "w1_quantile", "log_w1_over_log_t", "n_paths"]
    assert frame["n_paths"].iloc[0] == 40
    assert frame["log_w1_over_log_t"].iloc[0] == pytest.approx(
        np.log(frame["w1_quantile"].iloc[0]) / np.log(4.0))
