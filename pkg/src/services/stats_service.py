"""
Fluctuation statistics: rescaled fluctuations, Wasserstein-1 distances to the
Gaussian limit, t * Var estimators and log-log rate fits.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..models.constants import LabConfig, W1Mode
from ..models.errors import DomainError, FitError, SampleSizeError
from ..models.results import FluctuationStats, RateSeries
from ..models.simulation import PathEnsemble
from logger_config import get_logger

logger = get_logger(__name__)


class StatsService:
    """Statistics over snapshot ensembles."""

    @staticmethod
    def w1_empirical(a: Sequence[float], b: Sequence[float]) -> float:
        """
        W1 between two equal-size empirical measures: mean |a_(i) - b_(i)| of
        the order statistics.

        Raises:
            SampleSizeError: sizes differ or a sample is empty
        """
        a = np.sort(np.asarray(a, dtype=float))
        b = np.sort(np.asarray(b, dtype=float))
        if a.shape != b.shape or a.size == 0:
            raise SampleSizeError(f"W1 needs equal non-empty samples, got sizes {a.size} and {b.size}")
        return float(np.mean(np.abs(a - b)))

    @staticmethod
    def gaussian_reference(n: int, mean: float, variance: float, seed: int) -> np.ndarray:
        """
        The fixed comparison sample of the paired mode.

        Drawn from a dedicated substream of `seed`, so it never shares
        increments with any simulated path and is reused across snapshot times.
        """
        if not variance > 0:
            raise DomainError(f"Gaussian target variance must be positive, got {variance}")
        stream = np.random.SeedSequence([int(seed), LabConfig.PAIRED_REFERENCE_STREAM])
        gen = np.random.Generator(np.random.Philox(stream))
        return mean + np.sqrt(variance) * gen.standard_normal(int(n))

    @staticmethod
    def w1_quantile(sample: Sequence[float], mean: float, variance: float) -> float:
        """W1 of the sample against N(mean, variance) quantiles at midpoints (i - 1/2)/N."""
        if not variance > 0:
            raise DomainError(f"Gaussian target variance must be positive, got {variance}")
        sample = np.sort(np.asarray(sample, dtype=float))
        if sample.size == 0:
            raise SampleSizeError("W1 needs a non-empty sample")
        n = sample.size
        levels = (np.arange(1, n + 1) - 0.5) / n
        quantiles = stats.norm.ppf(levels, loc=mean, scale=np.sqrt(variance))
        return float(np.mean(np.abs(sample - quantiles)))

    @staticmethod
    def w1_vs_gaussian(sample: Sequence[float], mean: float, variance: float,
                       mode: W1Mode = W1Mode.PAIRED_EMPIRICAL, seed: int = 0) -> float:
        """
        W1 of a sample against the Gaussian N(mean, variance).

        Args:
            sample: Observed values
            mean, variance: Gaussian target
            mode: paired_empirical compares against gaussian_reference(seed);
                quantile compares against exact Gaussian quantiles
            seed: Seed of the paired comparison sample

        Raises:
            DomainError: variance <= 0
        """
        if not variance > 0:
            raise DomainError(f"Gaussian target variance must be positive, got {variance}")
        if W1Mode(mode) is W1Mode.QUANTILE:
            return StatsService.w1_quantile(sample, mean, variance)
        sample = np.asarray(sample, dtype=float)
        reference = StatsService.gaussian_reference(sample.size, mean, variance, seed)
        return StatsService.w1_empirical(sample, reference)

    @staticmethod
    def fluctuation_stats(ensemble: PathEnsemble, theta_star: float, t: float) -> FluctuationStats:
        """
        Rescaled fluctuations F = sqrt(t)(theta_t - theta*) and t * Var(theta_t).

        The variance is the unbiased (N - 1) estimator over unflagged paths.

        Raises:
            SampleSizeError: fewer than 2 unflagged paths
        """
        theta = ensemble.theta_at(t)
        if theta.size < 2:
            raise SampleSizeError(
                f"fluctuation statistics at t={t} need >= 2 unflagged paths, got {theta.size}"
            )
        return StatsService.summarize(theta, theta_star, t)

    @staticmethod
    def summarize(theta: np.ndarray, theta_star: float, t: float) -> FluctuationStats:
        """FluctuationStats of a plain theta sample at time t."""
        theta = np.asarray(theta, dtype=float)
        n = theta.size
        var = float(np.var(theta, ddof=1))
        centered = theta - theta.mean()
        mu4 = float(np.mean(centered ** 4))
        # standard error of the unbiased sample variance
        se_var = np.sqrt(max(mu4 - (n - 3) / (n - 1) * var ** 2, 0.0) / n)
        return FluctuationStats(
            t=float(t),
            mean=float(theta.mean()),
            var=var,
            t_var=float(t) * var,
            f_sample=np.sqrt(t) * (theta - theta_star),
            stderr=float(t) * float(se_var),
        )

    @staticmethod
    def jackknife_mean(values: np.ndarray, axis: int = -1) -> Tuple[np.ndarray, np.ndarray]:
        """Sample mean and leave-one-out jackknife standard error along an axis."""
        values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
        n = values.shape[-1]
        if n < 2:
            raise SampleSizeError(f"jackknife needs >= 2 samples, got {n}")
        total = values.sum(axis=-1, keepdims=True)
        loo = (total - values) / (n - 1)
        spread = loo - loo.mean(axis=-1, keepdims=True)
        stderr = np.sqrt((n - 1) / n * np.sum(spread ** 2, axis=-1))
        return values.mean(axis=-1), stderr

    @staticmethod
    def default_window(times: np.ndarray) -> Tuple[float, float]:
        """Upper half of a time grid (at least MIN_FIT_POINTS points when available)."""
        times = np.asarray(times, dtype=float)
        if times.size == 0:
            raise FitError("cannot choose a fit window on an empty time grid")
        start = min(times.size // 2, max(times.size - LabConfig.MIN_FIT_POINTS, 0))
        return float(times[start]), float(times[-1])

    @staticmethod
    def _loglog(series: RateSeries, window: Optional[Tuple[float, float]]):
        window = window if window is not None else StatsService.default_window(series.times)
        mask = series.in_window(window)
        if np.count_nonzero(mask) < LabConfig.MIN_FIT_POINTS:
            raise FitError(
                f"rate fit needs >= {LabConfig.MIN_FIT_POINTS} points in window {window}, "
                f"got {np.count_nonzero(mask)}"
            )
        values = series.values[mask]
        if np.any(~np.isfinite(values)) or np.any(values <= 0):
            raise FitError(f"rate fit needs positive finite values in window {window}")
        result = stats.linregress(np.log(series.times[mask]), np.log(values))
        return window, float(result.slope), float(result.intercept)

    @staticmethod
    def rate_fit(series: RateSeries, window: Optional[Tuple[float, float]] = None) -> float:
        """
        Least-squares slope of log(value) against log(t) inside the window.

        Raises:
            FitError: fewer than 3 points in the window, or nonpositive values
        """
        return StatsService._loglog(series, window)[1]

    @staticmethod
    def fit_series(series: RateSeries, window: Optional[Tuple[float, float]] = None) -> RateSeries:
        """Copy of the series carrying its log-log fit."""
        window, slope, intercept = StatsService._loglog(series, window)
        return series.with_fit(window, slope, intercept)

    @staticmethod
    def variance_frame(ensemble: PathEnsemble, theta_star: float) -> pd.DataFrame:
        """Rows t, mean_theta, var_theta, t_var, stderr, mean_f for every snapshot."""
        rows = []
        for t in ensemble.snapshot_times:
            record = StatsService.fluctuation_stats(ensemble, theta_star, t)
            rows.append({
                "t": record.t,
                "mean_theta": record.mean,
                "var_theta": record.var,
                "t_var": record.t_var,
                "stderr": record.stderr,
                "mean_f": record.mean_f,
            })
        return pd.DataFrame(rows, columns=["t", "mean_theta", "var_theta", "t_var", "stderr", "mean_f"])

    @staticmethod
    def w1_frame(ensemble: PathEnsemble, theta_star: float, target_variance: float,
                 mode: W1Mode, seed: int) -> pd.DataFrame:
        """
        Rows t, w1_paired, w1_quantile, log_w1_over_log_t, n_paths for every snapshot.

        The diagnostic log W1 / log t uses the distance of the selected mode.
        The paired comparison sample is drawn once and reused at every t.
        """
        if not target_variance > 0:
            raise DomainError(f"Gaussian target variance must be positive, got {target_variance}")
        rows = []
        reference = None
        for t in ensemble.snapshot_times:
            record = StatsService.fluctuation_stats(ensemble, theta_star, t)
            if reference is None or reference.size != record.n_paths:
                reference = StatsService.gaussian_reference(record.n_paths, 0.0, target_variance, seed)
            paired = StatsService.w1_empirical(record.f_sample, reference)
            quantile = StatsService.w1_quantile(record.f_sample, 0.0, target_variance)
            chosen = quantile if W1Mode(mode) is W1Mode.QUANTILE else paired
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.log(chosen) / np.log(t) if t > 1.0 and chosen > 0 else float("nan")
            rows.append({
                "t": float(t),
                "w1_paired": paired,
                "w1_quantile": quantile,
                "log_w1_over_log_t": float(ratio),
                "n_paths": record.n_paths,
            })
        logger.debug(f"[STATS] W1 series over {len(rows)} snapshots, target variance {target_variance:.6g}")
        return pd.DataFrame(rows, columns=["t", "w1_paired", "w1_quantile", "log_w1_over_log_t", "n_paths"])

    @staticmethod
    def w1_rate(frame: pd.DataFrame, mode: W1Mode) -> Optional[RateSeries]:
        """Fitted W1 rate series of the selected mode; None when it cannot be fitted."""
        column = "w1_quantile" if W1Mode(mode) is W1Mode.QUANTILE else "w1_paired"
        series = RateSeries(times=frame["t"].to_numpy(), values=frame[column].to_numpy())
        try:
            return StatsService.fit_series(series)
        except FitError as e:
            logger.warning(f"[STATS] W1 rate fit skipped: {e}")
            return None
