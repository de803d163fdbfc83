"""
Simulation configuration and ensemble containers.
"""

from dataclasses import dataclass, field, asdict
from typing import Dict, Optional, Tuple

import numpy as np

from .constants import LabConfig
from .errors import ConfigurationError


@dataclass(frozen=True)
class SimConfig:
    """
    Parameters of one Euler-Maruyama ensemble.

    Attributes:
        dt: Time step
        t_end: Final time
        c_alpha: Learning-rate magnitude C_alpha
        c0: Learning-rate offset C_0 in alpha_t = C_alpha / (C_0 + t)
        x0, theta0: Initial state
        n_paths: Number of Monte Carlo paths
        master_seed: Root seed for the per-path substreams
        snapshot_times: Strictly increasing times in (t_start, t_end]
        t_start: Start time of the simulation
        store_full: Path indices whose full-resolution (X, theta, dW) is kept
        zero_noise: Replace every Brownian increment with 0 (test hook)
    """
    dt: float
    t_end: float
    c_alpha: float
    n_paths: int
    master_seed: int
    snapshot_times: Tuple[float, ...]
    c0: float = 1.0
    x0: float = 0.0
    theta0: float = 0.0
    t_start: float = 0.0
    store_full: Tuple[int, ...] = ()
    zero_noise: bool = False

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        object.__setattr__(self, "store_full", tuple(sorted(set(int(i) for i in self.store_full))))
        self.validate()

    def validate(self) -> None:
        """Raise ConfigurationError naming the first invalid key."""
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > self.t_start):
            raise ConfigurationError(f"t_end must exceed t_start={self.t_start}, got {self.t_end}")
        if not (self.c_alpha > 0):
            raise ConfigurationError(f"c_alpha must be positive, got {self.c_alpha}")
        if self.c0 < 0:
            raise ConfigurationError(f"c0 must be nonnegative, got {self.c0}")
        if not (self.c0 + self.t_start > 0):
            raise ConfigurationError(
                f"c0 + t_start must be positive (alpha is singular at c0 + t = 0), "
                f"got c0={self.c0}, t_start={self.t_start}"
            )
        if self.n_paths < 1:
            raise ConfigurationError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.master_seed < 0 or self.master_seed >= 2 ** 64:
            raise ConfigurationError(f"seed must be a 64-bit nonnegative integer, got {self.master_seed}")
        if not np.isfinite(self.x0) or not np.isfinite(self.theta0):
            raise ConfigurationError(f"x0/theta0 must be finite, got {self.x0}/{self.theta0}")
        self.step_index(self.t_end, key="t_end")
        if not self.snapshot_times:
            raise ConfigurationError("snapshots must list at least one time")
        times = np.asarray(self.snapshot_times)
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError(f"snapshots must be strictly increasing, got {list(self.snapshot_times)}")
        if times[0] <= self.t_start or times[-1] > self.t_end * (1 + LabConfig.SNAPSHOT_GRID_RTOL):
            raise ConfigurationError(
                f"snapshots must lie in ({self.t_start}, {self.t_end}], "
                f"got [{times[0]}, {times[-1]}]"
            )
        if times.size > 1 and self.dt > np.min(np.diff(times)) * (1 + LabConfig.SNAPSHOT_GRID_RTOL):
            raise ConfigurationError(
                f"dt={self.dt} exceeds the smallest snapshot gap {np.min(np.diff(times))}"
            )
        for t in self.snapshot_times:
            self.step_index(t, key="snapshots")
        bad = [i for i in self.store_full if not 0 <= i < self.n_paths]
        if bad:
            raise ConfigurationError(f"store_full path indices out of range: {bad}")

    @property
    def n_steps(self) -> int:
        return self.step_index(self.t_end)

    @property
    def snapshot_steps(self) -> Tuple[int, ...]:
        return tuple(self.step_index(t) for t in self.snapshot_times)

    def step_index(self, t: float, key: str = "time") -> int:
        """
        Step number k with t = t_start + k * dt.

        Raises:
            ConfigurationError: t is not on the dt-grid within relative 1e-9
        """
        q = (float(t) - self.t_start) / self.dt
        k = int(round(q))
        if k < 0 or abs(q - k) > LabConfig.SNAPSHOT_GRID_RTOL * max(abs(q), 1.0):
            raise ConfigurationError(f"{key}: time {t} is not on the dt={self.dt} grid starting at {self.t_start}")
        return k

    def time_at(self, k) -> np.ndarray:
        return self.t_start + np.asarray(k) * self.dt

    def alpha(self, t) -> np.ndarray:
        """Learning rate alpha_t = C_alpha / (C_0 + t)."""
        return self.c_alpha / (self.c0 + np.asarray(t, dtype=float))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["snapshot_times"] = list(self.snapshot_times)
        data["store_full"] = list(self.store_full)
        return data


@dataclass(frozen=True)
class PathRecord:
    """Full-resolution values of one path: x and theta at every step, dW per step."""
    path_index: int
    t_start: float
    dt: float
    x: np.ndarray
    theta: np.ndarray
    dw: np.ndarray

    @property
    def n_steps(self) -> int:
        return int(self.dw.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_steps + 1) * self.dt


@dataclass
class PathEnsemble:
    """
    Snapshotted ensemble state.

    Attributes:
        config: The configuration that produced the ensemble
        snapshot_times: Times of the snapshot rows
        theta: (n_snapshots, n_paths) parameter values
        x: (n_snapshots, n_paths) data-process values
        seeds: Per-path substream seeds
        flagged: Paths that produced a non-finite value; excluded from statistics
        full: Full-resolution records for the paths listed in config.store_full
    """
    config: SimConfig
    snapshot_times: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    seeds: np.ndarray
    flagged: np.ndarray
    full: Dict[int, PathRecord] = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return int(self.theta.shape[1])

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.flagged))

    def snapshot_index(self, t: float) -> int:
        """Row of the snapshot at time t (matched on the dt-grid)."""
        k = self.config.step_index(t)
        steps = self.config.snapshot_steps
        if k not in steps:
            raise ConfigurationError(f"no snapshot at t={t}; available {list(self.snapshot_times)}")
        return steps.index(k)

    def theta_at(self, t: float, include_flagged: bool = False) -> np.ndarray:
        row = self.theta[self.snapshot_index(t)]
        return row if include_flagged else row[~self.flagged]

    def to_frame_dict(self) -> Dict[str, np.ndarray]:
        """Long-format columns t, path_index, x, theta (snapshot-major order)."""
        n_snap, n_paths = self.theta.shape
        return {
            "t": np.repeat(self.snapshot_times, n_paths),
            "path_index": np.tile(np.arange(n_paths), n_snap),
            "x": self.x.reshape(-1),
            "theta": self.theta.reshape(-1),
        }


def snapshot_schedule(spec, t_end: float, dt: float, t_start: float = 0.0) -> Tuple[float, ...]:
    """
    Expand a snapshot schedule.

    Args:
        spec: "log:<n>:<t_min>:<t_max>" or an explicit list of times
        t_end: Final simulation time (log schedules are clipped to it)
        dt: Time step; log-spaced times are rounded to the dt-grid
        t_start: Start of the dt-grid

    Returns:
        Strictly increasing tuple of times
    """
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 4 or parts[0] != "log":
            raise ConfigurationError(f"snapshots: expected 'log:<n>:<t_min>:<t_max>', got {spec!r}")
        try:
            n, t_min, t_max = int(parts[1]), float(parts[2]), float(parts[3])
        except ValueError:
            raise ConfigurationError(f"snapshots: malformed log schedule {spec!r}")
        if n < 1 or not (0 < t_min <= t_max):
            raise ConfigurationError(f"snapshots: need n >= 1 and 0 < t_min <= t_max, got {spec!r}")
        t_max = min(t_max, t_end)
        t_min = min(t_min, t_max)
        raw = np.geomspace(t_min, t_max, n) if n > 1 else np.array([t_max])
        steps = np.round((raw - t_start) / dt).astype(np.int64)
        steps = np.unique(np.clip(steps, 1, None))
        return tuple(float(t_start + k * dt) for k in steps)
    try:
        return tuple(float(t) for t in spec)
    except TypeError:
        raise ConfigurationError(f"snapshots: expected a schedule string or a list, got {spec!r}")
