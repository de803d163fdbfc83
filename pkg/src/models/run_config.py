"""
Resolved run configuration shared by every subcommand.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

from .constants import LabConfig, W1Mode
from .drift import BuiltinModel
from .simulation import SimConfig, snapshot_schedule


@dataclass(frozen=True)
class QuadratureSettings:
    """Density grid: explicit half-width L or automatic sizing, and the point count."""
    half_width: Optional[float] = None
    n_points: int = LabConfig.DEFAULT_GRID_POINTS


@dataclass(frozen=True)
class MalliavinSettings:
    """Anchors, powers and fit controls of the moment-scaling runs."""
    anchors: Optional[Tuple[float, ...]] = None
    pairs: Optional[Tuple[Tuple[float, float], ...]] = None
    powers: Tuple[int, ...] = LabConfig.DEFAULT_MOMENT_POWERS
    orders: Tuple[int, ...] = (1,)
    n_times: int = LabConfig.DEFAULT_MOMENT_TIMES
    fit_window: Optional[Tuple[float, float]] = None
    n_paths: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    """
    A fully validated run configuration.

    Attributes:
        name: Label of the run (preset name or config file stem)
        model, theta_star, sigma: Builtin model selection
        c_alphas: One or more learning-rate magnitudes
        snapshots: Schedule string or explicit times (None: log-spaced default)
        w1_mode: Distance used for the log W1 / log t diagnostic
        sigma_bar: Override of the Gaussian target variance
        poisson_theta: theta at which the poisson subcommand solves (default theta*)
        workers: Worker processes (scheduling only, never recorded in outputs)
    """
    name: str
    model: str
    theta_star: float
    c_alphas: Tuple[float, ...]
    dt: float
    t_end: float
    sigma: float = 1.0
    c0: float = 1.0
    t_start: float = 0.0
    n_paths: int = 1000
    seed: int = 0
    x0: float = 0.0
    theta0: float = 0.0
    snapshots: Optional[Union[str, Tuple[float, ...]]] = None
    w1_mode: W1Mode = W1Mode.QUANTILE
    sigma_bar: Optional[float] = None
    poisson_theta: Optional[float] = None
    workers: int = 1
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    malliavin: MalliavinSettings = field(default_factory=MalliavinSettings)

    def builtin(self) -> BuiltinModel:
        return BuiltinModel.from_name(self.model, self.theta_star, self.sigma)

    def snapshot_times(self) -> Tuple[float, ...]:
        """Expanded snapshot schedule; defaults to 40 log-spaced times up to t_end."""
        spec = self.snapshots
        if spec is None:
            t_min = min(max(10.0, self.t_start + self.dt), self.t_end)
            spec = f"log:40:{t_min}:{self.t_end}"
        return snapshot_schedule(spec, self.t_end, self.dt, self.t_start)

    def sim_config(self, c_alpha: float, n_paths: Optional[int] = None,
                   snapshot_times: Optional[Tuple[float, ...]] = None,
                   t_end: Optional[float] = None, store_full: Tuple[int, ...] = ()) -> SimConfig:
        """SimConfig for one learning-rate magnitude."""
        return SimConfig(
            dt=self.dt,
            t_end=self.t_end if t_end is None else t_end,
            c_alpha=c_alpha,
            n_paths=self.n_paths if n_paths is None else n_paths,
            master_seed=self.seed,
            snapshot_times=self.snapshot_times() if snapshot_times is None else snapshot_times,
            c0=self.c0,
            x0=self.x0,
            theta0=self.theta0,
            t_start=self.t_start,
            store_full=store_full,
        )

    def to_dict(self) -> Dict:
        """Resolved keys for CSV headers (the worker count is deliberately absent)."""
        m = self.malliavin
        return {
            "model": self.model,
            "theta_star": self.theta_star,
            "sigma": self.sigma,
            "c_alpha": list(self.c_alphas),
            "c0": self.c0,
            "t_start": self.t_start,
            "dt": self.dt,
            "t_end": self.t_end,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "x0": self.x0,
            "theta0": self.theta0,
            "snapshots": self.snapshots if isinstance(self.snapshots, str) or self.snapshots is None
            else list(self.snapshots),
            "w1_mode": self.w1_mode.value,
            "sigma_bar": self.sigma_bar,
            "poisson_theta": self.poisson_theta,
            "quadrature.L": self.quadrature.half_width,
            "quadrature.n_points": self.quadrature.n_points,
            "malliavin.anchors": list(m.anchors) if m.anchors is not None else None,
            "malliavin.pairs": [list(p) for p in m.pairs] if m.pairs is not None else None,
            "malliavin.p": list(m.powers),
            "malliavin.order": list(m.orders),
            "malliavin.n_times": m.n_times,
            "malliavin.fit_window": list(m.fit_window) if m.fit_window is not None else None,
            "malliavin.n_paths": m.n_paths,
        }
