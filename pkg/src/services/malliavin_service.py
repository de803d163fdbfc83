"""
First- and second-order Malliavin derivatives of (X, theta) along simulated
paths, and moment-scaling estimates of the parameter derivatives.

Stored paths (PathRecord) are propagated with coefficients evaluated over the
whole path at once. Moment estimates over many paths replay each path from its
substream seed instead of storing it, so memory stays one row per chunk.
"""

import time
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from ..models.constants import LabConfig
from ..models.drift import DriftModel, GPartials
from ..models.errors import ConfigurationError, DomainError, FitError, SequencingError
from ..models.results import (
    AnchorSet, FirstOrderDerivative, MalliavinTrajectory, MomentSeries, RateSeries,
    SecondOrderDerivative,
)
from ..models.simulation import PathRecord, SimConfig, snapshot_schedule
from .drift_service import DriftService
from .simulation_service import SimulationService
from .stats_service import StatsService
from logger_config import get_logger

logger = get_logger(__name__)

Paths = Union[PathRecord, Sequence[PathRecord]]


def _advance_first(p: Dict, gp: GPartials, alpha, dt: float, dw, dx, dtheta):
    """One step of (D_r X, D_r theta)."""
    dx_next = dx * np.exp(p["f_star_x"] * dt)
    dtheta_next = (
        dtheta
        + alpha * (-gp.g_thetatheta * dtheta - gp.g_xtheta * dx) * dt
        + alpha * (p["f_thetatheta"] * dtheta + p["f_xtheta"] * dx) * dw
    )
    return dx_next, dtheta_next


def _advance_second(p: Dict, gp: GPartials, alpha, dt: float, dw, first1, first2, d2x, d2theta):
    """One step of (D^2 X, D^2 theta) given both first-order derivatives at the same step."""
    dx1, dth1 = first1
    dx2, dth2 = first2
    gamma_g = -(
        gp.g_thetathetatheta * dth1 * dth2
        + gp.g_thetathetax * dth1 * dx2
        + gp.g_thetathetax * dx1 * dth2
        + gp.g_xxtheta * dx1 * dx2
        + gp.g_xtheta * d2x
    )
    gamma_f = (
        p["f_xthetatheta"] * dth1 * dx2
        + p["f_xthetatheta"] * dx1 * dth2
        + p["f_thetathetatheta"] * dth1 * dth2
        + p["f_xxtheta"] * dx1 * dx2
        + p["f_xtheta"] * d2x
    )
    d2x_next = d2x * np.exp(p["f_star_x"] * dt) + p["f_star_xx"] * dx1 * dx2 * dt
    d2theta_next = (
        d2theta
        + alpha * (-gp.g_thetatheta * d2theta + gamma_g) * dt
        + alpha * (p["f_thetatheta"] * d2theta + gamma_f) * dw
    )
    return d2x_next, d2theta_next


def _gamma(p: Dict, alpha, dx1, dtheta1, same_anchor: bool):
    """Initial value of D^2_{r1,r2} theta at r2, given D_{r1}X and D_{r1}theta at r2."""
    value = alpha * (p["f_xtheta"] * dx1 + p["f_thetatheta"] * dtheta1)
    return 2.0 * value if same_anchor else value


def _rows(p: Dict, gp: GPartials, k: int):
    return {key: v[k] for key, v in p.items()}, GPartials(
        **{name: getattr(gp, name)[k] for name in GPartials.__dataclass_fields__}
    )


class MalliavinService:
    """Propagation of Malliavin derivatives and their moment scaling."""

    @staticmethod
    def anchor_step(cfg: SimConfig, r: float, key: str = "anchors") -> int:
        """
        Grid step of an anchor time.

        Raises:
            ConfigurationError: r < 1, before t_start, after t_end or off the dt-grid
        """
        if r < LabConfig.MIN_MALLIAVIN_ANCHOR:
            raise ConfigurationError(f"{key}: anchor {r} must be >= {LabConfig.MIN_MALLIAVIN_ANCHOR}")
        if r < cfg.t_start:
            raise ConfigurationError(f"{key}: anchor {r} precedes t_start={cfg.t_start}")
        k = cfg.step_index(r, key=key)
        if k > cfg.n_steps:
            raise ConfigurationError(f"{key}: anchor {r} is after t_end={cfg.t_end}")
        return k

    @staticmethod
    def default_anchors(cfg: SimConfig) -> AnchorSet:
        """Anchors t_end/64, t_end/16, t_end/4 on the grid; pairs (r, r) and (r, 2r)."""
        anchors = []
        for fraction in LabConfig.DEFAULT_ANCHOR_FRACTIONS:
            k = int(round((cfg.t_end * fraction - cfg.t_start) / cfg.dt))
            r = float(cfg.time_at(k))
            if r >= max(LabConfig.MIN_MALLIAVIN_ANCHOR, cfg.t_start) and k < cfg.n_steps:
                anchors.append(r)
        pairs = [(r, r) for r in anchors]
        pairs += [(r, float(cfg.time_at(2 * cfg.step_index(r)))) for r in anchors
                  if 2 * cfg.step_index(r) < cfg.n_steps]
        return AnchorSet(anchors=tuple(anchors), pairs=tuple(pairs))

    @staticmethod
    def _stack(paths: Paths, cfg: SimConfig) -> Tuple[Tuple[int, ...], np.ndarray, np.ndarray, np.ndarray]:
        records = [paths] if isinstance(paths, PathRecord) else list(paths)
        if not records:
            raise SequencingError("no stored paths to propagate along")
        for record in records:
            if record.n_steps != cfg.n_steps or record.dt != cfg.dt:
                raise ConfigurationError(
                    f"path {record.path_index} has {record.n_steps} steps of {record.dt}, "
                    f"configuration expects {cfg.n_steps} of {cfg.dt}"
                )
        x = np.stack([r.x for r in records], axis=1)
        theta = np.stack([r.theta for r in records], axis=1)
        dw = np.stack([r.dw for r in records], axis=1)
        return tuple(r.path_index for r in records), x, theta, dw

    @staticmethod
    def _coefficients(model: DriftModel, x: np.ndarray, theta: np.ndarray):
        return model.partials_at(x, theta), DriftService.g_partials(model, x, theta, checked=False)

    @staticmethod
    def propagate_first(paths: Paths, model: DriftModel, r: float, cfg: SimConfig) -> FirstOrderDerivative:
        """
        D_r X_t and D_r theta_t for t >= r along stored paths.

        DX starts at 1 and advances by exact exponential factors; D theta
        starts at alpha_r f_theta(X_r, theta_r) and is Euler-stepped with the
        stored Brownian increments.

        Args:
            paths: One PathRecord or several with identical grids
            model: Drift model
            r: Anchor time (on the dt-grid, >= 1)
            cfg: Configuration that produced the paths

        Returns:
            FirstOrderDerivative with arrays of shape (steps from r, paths)

        Raises:
            ConfigurationError: anchor off-grid
            DomainError: a derivative became non-finite
        """
        _, x, theta, dw = MalliavinService._stack(paths, cfg)
        kr = MalliavinService.anchor_step(cfg, r)
        n = cfg.n_steps
        p, gp = MalliavinService._coefficients(model, x[kr:n], theta[kr:n])

        dx = np.empty((n - kr + 1, x.shape[1]))
        dtheta = np.empty_like(dx)
        dx[0] = 1.0
        dtheta[0] = cfg.alpha(cfg.time_at(kr)) * model.f_theta(x[kr], theta[kr])
        for j in range(n - kr):
            k = kr + j
            p_k, gp_k = _rows(p, gp, j)
            dx[j + 1], dtheta[j + 1] = _advance_first(
                p_k, gp_k, cfg.alpha(cfg.time_at(k)), cfg.dt, dw[k], dx[j], dtheta[j]
            )
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dtheta))):
            raise DomainError(f"first-order derivative at anchor r={r} became non-finite")
        return FirstOrderDerivative(anchor=float(r), times=cfg.time_at(np.arange(kr, n + 1)),
                                    dx=dx, dtheta=dtheta)

    @staticmethod
    def propagate_second(paths: Paths, first: Dict[float, FirstOrderDerivative], model: DriftModel,
                         r1: float, r2: float, cfg: SimConfig) -> SecondOrderDerivative:
        """
        D^2_{r1,r2} X_t and D^2_{r1,r2} theta_t for t >= max(r1, r2).

        The pair is canonicalized to r1 <= r2 so both argument orders give
        bit-identical results. D^2 X starts at 0, D^2 theta at gamma.

        Args:
            paths: The stored paths the first-order derivatives were computed on
            first: First-order derivatives keyed by anchor
            model: Drift model
            r1, r2: Anchor pair
            cfg: Configuration that produced the paths

        Raises:
            SequencingError: a first-order derivative for r1 or r2 is missing
            DomainError: a derivative became non-finite
        """
        r1, r2 = AnchorSet.canonical(r1, r2)
        missing = [r for r in (r1, r2) if r not in first]
        if missing:
            raise SequencingError(
                f"second-order pair ({r1}, {r2}) needs first-order derivatives at {missing}"
            )
        _, x, theta, dw = MalliavinService._stack(paths, cfg)
        k1 = MalliavinService.anchor_step(cfg, r1)
        k2 = MalliavinService.anchor_step(cfg, r2)
        n = cfg.n_steps
        d1, d2 = first[r1], first[r2]
        off1 = k2 - k1

        p, gp = MalliavinService._coefficients(model, x[k2:n + 1], theta[k2:n + 1])
        d2x = np.empty((n - k2 + 1, x.shape[1]))
        d2theta = np.empty_like(d2x)
        p_0, _ = _rows(p, gp, 0)
        d2x[0] = 0.0
        d2theta[0] = _gamma(p_0, cfg.alpha(cfg.time_at(k2)), d1.dx[off1], d1.dtheta[off1], k1 == k2)
        for j in range(n - k2):
            k = k2 + j
            p_k, gp_k = _rows(p, gp, j)
            d2x[j + 1], d2theta[j + 1] = _advance_second(
                p_k, gp_k, cfg.alpha(cfg.time_at(k)), cfg.dt, dw[k],
                (d1.dx[off1 + j], d1.dtheta[off1 + j]), (d2.dx[j], d2.dtheta[j]),
                d2x[j], d2theta[j],
            )
        if not (np.all(np.isfinite(d2x)) and np.all(np.isfinite(d2theta))):
            raise DomainError(f"second-order derivative for pair ({r1}, {r2}) became non-finite")
        return SecondOrderDerivative(r1=r1, r2=r2, times=cfg.time_at(np.arange(k2, n + 1)),
                                     d2x=d2x, d2theta=d2theta)

    @staticmethod
    def propagate(paths: Paths, model: DriftModel, anchors: AnchorSet, cfg: SimConfig) -> MalliavinTrajectory:
        """Every first-order anchor, then every second-order pair, along stored paths."""
        indices = MalliavinService._stack(paths, cfg)[0]
        trajectory = MalliavinTrajectory(path_indices=indices)
        for r in anchors.all_first_order():
            trajectory.first[r] = MalliavinService.propagate_first(paths, model, r, cfg)
        for r1, r2 in anchors.pairs:
            trajectory.second[(r1, r2)] = MalliavinService.propagate_second(
                paths, trajectory.first, model, r1, r2, cfg
            )
        logger.info(
            f"[MALLIAVIN] {model.name}: {len(trajectory.first)} anchors, "
            f"{len(trajectory.second)} pairs on {len(indices)} stored paths"
        )
        return trajectory

    @staticmethod
    def _replay_chunk(model: DriftModel, cfg: SimConfig, indices: Sequence[int],
                      anchor_steps: Sequence[int], pair_steps: Sequence[Tuple[int, int]],
                      record_steps: Sequence[int]):
        """
        Re-simulate a chunk of paths from their seeds while propagating derivatives.

        Returns the recorded D theta (per anchor step) and D^2 theta (per pair)
        values, shape (len(record_steps), chunk), and the non-finite flags.
        """
        n = len(indices)
        seeds = [SimulationService.path_seed(cfg.master_seed, i) for i in indices]
        record_rows = {k: row for row, k in enumerate(record_steps)}
        x = np.full(n, cfg.x0, dtype=float)
        theta = np.full(n, cfg.theta0, dtype=float)
        flagged = np.zeros(n, dtype=bool)

        first: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        second: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]] = {}
        out_first = {k: np.full((len(record_steps), n), np.nan) for k in anchor_steps}
        out_second = {pair: np.full((len(record_steps), n), np.nan) for pair in pair_steps}
        earliest = min(anchor_steps)

        def start_and_record(k: int) -> Optional[Tuple[Dict, GPartials]]:
            coeffs = None
            if k >= earliest:
                coeffs = MalliavinService._coefficients(model, x, theta)
            alpha = cfg.alpha(cfg.time_at(k))
            if k in anchor_steps:
                first[k] = (np.ones(n), alpha * model.f_theta(x, theta))
            for k1, k2 in pair_steps:
                if k2 == k:
                    dx1, dth1 = first[k1]
                    second[(k1, k2)] = (np.zeros(n), _gamma(coeffs[0], alpha, dx1, dth1, k1 == k2))
            row = record_rows.get(k)
            if row is not None:
                for ka, (_, dth) in first.items():
                    if ka in out_first:
                        out_first[ka][row] = dth
                for pair, (_, d2th) in second.items():
                    out_second[pair][row] = d2th
            return coeffs

        with np.errstate(over="ignore", invalid="ignore"):
            for start, dw_block in SimulationService.noise_blocks(seeds, cfg.n_steps, cfg.dt, cfg.zero_noise):
                for j in range(dw_block.shape[0]):
                    k = start + j
                    dw = dw_block[j]
                    coeffs = start_and_record(k)
                    if coeffs is not None:
                        p, gp = coeffs
                        alpha = cfg.alpha(cfg.time_at(k))
                        for (k1, k2), (d2x, d2th) in list(second.items()):
                            second[(k1, k2)] = _advance_second(
                                p, gp, alpha, cfg.dt, dw, first[k1], first[k2], d2x, d2th
                            )
                        for ka, (dx, dth) in list(first.items()):
                            first[ka] = _advance_first(p, gp, alpha, cfg.dt, dw, dx, dth)
                    x, theta = SimulationService.step(
                        model, x, theta, cfg.time_at(k), cfg.dt, dw, cfg.c_alpha, cfg.c0
                    )
                    bad = ~(np.isfinite(x) & np.isfinite(theta))
                    for dx, dth in first.values():
                        bad |= ~(np.isfinite(dx) & np.isfinite(dth))
                    for d2x, d2th in second.values():
                        bad |= ~(np.isfinite(d2x) & np.isfinite(d2th))
                    flagged |= bad
            start_and_record(cfg.n_steps)
        return out_first, out_second, flagged

    @staticmethod
    def series_times(cfg: SimConfig, start: float,
                     n_times: int = LabConfig.DEFAULT_MOMENT_TIMES) -> Tuple[float, ...]:
        """
        Log-spaced grid for one series, strictly after its start anchor.

        The grid begins at 2*start, or halfway to t_end when 2*start would
        reach t_end. Empty when the anchor sits at t_end.
        """
        if start >= cfg.t_end - 0.5 * cfg.dt:
            return ()
        t_min = min(2.0 * start, 0.5 * (start + cfg.t_end))
        times = snapshot_schedule(f"log:{n_times}:{t_min}:{cfg.t_end}", cfg.t_end, cfg.dt, cfg.t_start)
        return tuple(t for t in times if t > start + 0.5 * cfg.dt)

    @staticmethod
    def moment_times(cfg: SimConfig, anchors: AnchorSet, order: int,
                     n_times: int = LabConfig.DEFAULT_MOMENT_TIMES) -> Tuple[float, ...]:
        """Union of the per-series grids of every anchor (order 1) or pair (order 2)."""
        starts = anchors.anchors if order == 1 else tuple(r2 for _, r2 in anchors.pairs)
        if not starts:
            raise ConfigurationError(f"malliavin: order {order} needs at least one anchor or pair")
        times = set()
        for start in set(starts):
            times.update(MalliavinService.series_times(cfg, start, n_times))
        return tuple(sorted(times))

    @staticmethod
    def moment_scaling(model: DriftModel, cfg: SimConfig, anchors: AnchorSet, p: int, order: int,
                       c_gbar: float, times: Optional[Sequence[float]] = None,
                       fit_window: Optional[Tuple[float, float]] = None,
                       workers: int = 1, n_times: int = LabConfig.DEFAULT_MOMENT_TIMES) -> List[MomentSeries]:
        """
        Estimate E[(D theta_t)^(2p)] (order 1, per anchor) or
        E[(D^2 theta_t)^(2p)] (order 2, per pair) over a grid of t.

        Each series carries jackknife standard errors, a log-log slope fitted
        over the window (default: upper half of its t-grid) and the predicted
        exponent -2p C_gbar C_alpha. A series that cannot be fitted keeps
        slope None; the failure is logged and the moment table is still returned.

        Args:
            model: Drift model
            cfg: Simulation configuration (n_paths >= 200)
            anchors: Anchor set; order 2 uses its pairs
            p: Positive integer power
            order: 1 or 2
            c_gbar: Curvature constant from the Poisson pipeline
            times: Evaluation times shared by every series (default: each series
                gets its own log-spaced grid after its start anchor)
            fit_window: Fit window in t
            workers: Worker processes (scheduling only)
            n_times: Points per default grid

        Raises:
            ConfigurationError: bad order, power, path count or anchors
        """
        if order not in (1, 2):
            raise ConfigurationError(f"malliavin.order must be 1 or 2, got {order}")
        if int(p) != p or p < 1:
            raise ConfigurationError(f"malliavin.p must be a positive integer, got {p}")
        if cfg.n_paths < LabConfig.MIN_MOMENT_PATHS:
            raise ConfigurationError(
                f"malliavin.n_paths must be >= {LabConfig.MIN_MOMENT_PATHS} for moment estimates, "
                f"got {cfg.n_paths}"
            )
        if order == 2 and not anchors.pairs:
            raise ConfigurationError("malliavin.pairs: order 2 needs at least one pair")
        if order == 1 and not anchors.anchors:
            raise ConfigurationError("malliavin.anchors: order 1 needs at least one anchor")

        start = time.time()
        needed = anchors.anchors if order == 1 else AnchorSet(pairs=anchors.pairs).all_first_order()
        anchor_steps = sorted(set(MalliavinService.anchor_step(cfg, r) for r in needed))
        pair_steps = []
        if order == 2:
            pair_steps = sorted(set(
                (MalliavinService.anchor_step(cfg, r1), MalliavinService.anchor_step(cfg, r2))
                for r1, r2 in anchors.pairs
            ))
        targets = [((k, k), 0) for k in anchor_steps] if order == 1 else [(pair, 1) for pair in pair_steps]

        own_steps: Dict[int, List[int]] = {}
        if times is None:
            for (_, k2), _ in targets:
                own = MalliavinService.series_times(cfg, float(cfg.time_at(k2)), n_times)
                own_steps[k2] = [cfg.step_index(t) for t in own]
            record_steps = sorted(set(k for steps in own_steps.values() for k in steps)) or [cfg.n_steps]
        else:
            record_steps = sorted(set(cfg.step_index(t, key="malliavin times") for t in times))
        if record_steps and record_steps[-1] > cfg.n_steps:
            raise ConfigurationError(f"malliavin times must not exceed t_end={cfg.t_end}")

        logger.info(
            f"[MALLIAVIN] order {order}, p={p}: replaying {cfg.n_paths} paths over "
            f"{len(record_steps)} times, workers={workers}"
        )
        chunks = SimulationService.chunks(cfg.n_paths)
        results = Parallel(n_jobs=workers)(
            delayed(MalliavinService._replay_chunk)(model, cfg, chunk, anchor_steps, pair_steps, record_steps)
            for chunk in chunks
        )
        flagged = np.concatenate([r[2] for r in results])
        if flagged.any():
            logger.warning(f"[MALLIAVIN] {int(flagged.sum())} replayed paths produced non-finite values")
        keep = ~flagged
        record_times = cfg.time_at(np.asarray(record_steps))
        predicted = -2.0 * p * c_gbar * cfg.c_alpha

        out: List[MomentSeries] = []
        for (k1, k2), kind in targets:
            values = np.concatenate([r[kind][k1 if kind == 0 else (k1, k2)] for r in results], axis=1)[:, keep]
            if times is None:
                usable = np.isin(record_steps, own_steps[k2])
            else:
                usable = record_times > cfg.time_at(k2) - 0.5 * cfg.dt
            moments, stderr = StatsService.jackknife_mean(values[usable] ** (2 * p), axis=1)
            series = RateSeries(times=record_times[usable], values=moments, stderr=stderr)
            try:
                series = StatsService.fit_series(series, fit_window)
            except FitError as e:
                logger.warning(f"[MALLIAVIN] fit skipped for ({cfg.time_at(k1)}, {cfg.time_at(k2)}): {e}")
            out.append(MomentSeries(
                order=order, p=int(p), r1=float(cfg.time_at(k1)), r2=float(cfg.time_at(k2)),
                series=series, predicted_exponent=predicted,
            ))
        logger.info(f"[MALLIAVIN] ✅ {len(out)} moment series in {time.time() - start:.2f}s")
        return out
