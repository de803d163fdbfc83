"""
Result containers: quadrature grids, densities, Poisson solutions, variance
reports, rate series and Malliavin derivative trajectories.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import integrate

from .constants import Regime
from .errors import ConfigurationError, FitError


@dataclass(frozen=True)
class UniformGrid:
    """Symmetric uniform grid on [-half_width, half_width] with an odd point count."""
    half_width: float
    n_points: int

    def __post_init__(self):
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise ConfigurationError(f"quadrature.L must be positive, got {self.half_width}")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ConfigurationError(f"quadrature.n_points must be odd and >= 3, got {self.n_points}")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    def refined(self) -> 'UniformGrid':
        """Same domain with the number of intervals doubled."""
        return UniformGrid(self.half_width, 2 * (self.n_points - 1) + 1)

    def widened(self, factor: float) -> 'UniformGrid':
        """Wider domain with the same number of points."""
        return UniformGrid(self.half_width * factor, self.n_points)


@dataclass(frozen=True)
class DensityTable:
    """
    Normalized invariant density on a grid.

    A point-mass table (x = [0], m = [1]) stands in for models without a data
    process; expectations then reduce to evaluation at x = 0.
    """
    x: np.ndarray
    m: np.ndarray
    tail_ratio: float = 0.0
    tail_mass: float = 0.0
    point_mass: bool = False

    @classmethod
    def degenerate(cls) -> 'DensityTable':
        return cls(x=np.array([0.0]), m=np.array([1.0]), point_mass=True)

    def expectation(self, values: np.ndarray) -> float:
        """Integral of values against the density."""
        values = np.broadcast_to(np.asarray(values, dtype=float), self.x.shape)
        if self.point_mass:
            return float(values[0])
        return float(integrate.trapezoid(values * self.m, self.x))

    @property
    def total_mass(self) -> float:
        return self.expectation(np.ones_like(self.x))

    @property
    def second_moment(self) -> float:
        return self.expectation(self.x ** 2)


@dataclass(frozen=True)
class PoissonSolution:
    """
    Centered solution v of L_x v = H and its derivative on the density grid.

    Attributes:
        x: Grid values
        v: Solution values, centered so that its mu-average vanishes
        v_x: Derivative of the solution
        source: The source H evaluated on the grid
        centering_residual: |integral of v against mu|
        source_residual: |integral of H against mu|
        tail_discrepancy: Max gap between lower- and upper-tail forms of v_x
    """
    x: np.ndarray
    v: np.ndarray
    v_x: np.ndarray
    source: np.ndarray
    centering_residual: float
    source_residual: float
    tail_discrepancy: float = 0.0


@dataclass(frozen=True)
class VarianceReport:
    """Constants of the limiting Gaussian law of the rescaled fluctuations."""
    model: str
    theta_star: float
    c_alpha: float
    c_gbar: float
    h_bar: float
    regime: Regime
    sigma_bar: Optional[float] = None
    predicted_w1_exponent: Optional[float] = None

    @property
    def c_gbar_c_alpha(self) -> float:
        return self.c_gbar * self.c_alpha

    def to_dict(self) -> Dict:
        """Convert report to a CSV row."""
        return {
            "model": self.model,
            "theta_star": self.theta_star,
            "c_alpha": self.c_alpha,
            "c_gbar": self.c_gbar,
            "h_bar": self.h_bar,
            "sigma_bar": self.sigma_bar if self.sigma_bar is not None else float("nan"),
            "regime": self.regime.value,
        }


@dataclass(frozen=True)
class RateSeries:
    """(t, value) pairs with an optional log-log fit over a window."""
    times: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    window: Optional[Tuple[float, float]] = None
    slope: Optional[float] = None
    intercept: Optional[float] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise FitError(f"times and values must be matching 1-D arrays, got {times.shape} and {values.shape}")
        if times.size and (np.any(times <= 0) or np.any(np.diff(times) <= 0)):
            raise FitError("times must be strictly increasing and positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def in_window(self, window: Optional[Tuple[float, float]] = None) -> np.ndarray:
        """Boolean mask of points inside the (inclusive) window."""
        lo, hi = window if window is not None else (self.window or (-np.inf, np.inf))
        return (self.times >= lo) & (self.times <= hi)

    def with_fit(self, window: Tuple[float, float], slope: float, intercept: float) -> 'RateSeries':
        return replace(self, window=window, slope=slope, intercept=intercept)


@dataclass(frozen=True)
class AnchorSet:
    """First-order anchors r and second-order pairs (r1, r2) stored with r1 <= r2."""
    anchors: Tuple[float, ...] = ()
    pairs: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        anchors = tuple(sorted(set(float(r) for r in self.anchors)))
        pairs = tuple(sorted(set(self.canonical(r1, r2) for r1, r2 in self.pairs)))
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "pairs", pairs)

    @staticmethod
    def canonical(r1: float, r2: float) -> Tuple[float, float]:
        r1, r2 = float(r1), float(r2)
        return (r1, r2) if r1 <= r2 else (r2, r1)

    def all_first_order(self) -> Tuple[float, ...]:
        """Anchors needed to propagate every pair, including the configured ones."""
        needed = set(self.anchors)
        for r1, r2 in self.pairs:
            needed.update((r1, r2))
        return tuple(sorted(needed))


@dataclass(frozen=True)
class FirstOrderDerivative:
    """D_r X and D_r theta from the anchor r onwards; arrays are (steps, paths)."""
    anchor: float
    times: np.ndarray
    dx: np.ndarray
    dtheta: np.ndarray


@dataclass(frozen=True)
class SecondOrderDerivative:
    """D^2_{r1,r2} X and D^2_{r1,r2} theta from r1 v r2 onwards; arrays are (steps, paths)."""
    r1: float
    r2: float
    times: np.ndarray
    d2x: np.ndarray
    d2theta: np.ndarray


@dataclass
class MalliavinTrajectory:
    """All derivative series computed on one set of stored paths."""
    path_indices: Tuple[int, ...]
    first: Dict[float, FirstOrderDerivative] = field(default_factory=dict)
    second: Dict[Tuple[float, float], SecondOrderDerivative] = field(default_factory=dict)


@dataclass(frozen=True)
class FluctuationStats:
    """
    Ensemble statistics of theta at one snapshot.

    Attributes:
        t: Snapshot time
        mean: Mean of theta over unflagged paths
        var: Unbiased (N-1) sample variance of theta
        t_var: t * var, the estimator of the limiting variance
        f_sample: Rescaled fluctuations sqrt(t) (theta - theta*)
        stderr: Standard error of t_var
    """
    t: float
    mean: float
    var: float
    t_var: float
    f_sample: np.ndarray
    stderr: float = float("nan")

    @property
    def n_paths(self) -> int:
        return int(self.f_sample.shape[0])

    @property
    def mean_f(self) -> float:
        return float(np.mean(self.f_sample))


@dataclass(frozen=True)
class MomentSeries:
    """E[(D theta_t)^(2p)] over t for one anchor (order 1) or pair (order 2)."""
    order: int
    p: int
    r1: float
    r2: float
    series: RateSeries
    predicted_exponent: float

    def to_rows(self):
        """CSV rows, one per time; slope columns repeat across the series."""
        stderr = self.series.stderr if self.series.stderr is not None else np.full_like(self.series.values, np.nan)
        slope = self.series.slope if self.series.slope is not None else float("nan")
        return [
            {
                "order": self.order, "p": self.p, "r1": self.r1, "r2": self.r2,
                "t": t, "moment": v, "stderr": s,
                "predicted_exponent": self.predicted_exponent, "fitted_slope": slope,
            }
            for t, v, s in zip(self.series.times, self.series.values, stderr)
        ]
