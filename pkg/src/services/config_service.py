"""
Loading and validation of TOML run configurations.

Precedence: command-line overrides, then config keys, then environment
(SGDCT_THREADS for the worker count), then built-in defaults.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

import config
from ..models.constants import W1Mode
from ..models.errors import ConfigurationError
from ..models.run_config import MalliavinSettings, QuadratureSettings, RunConfig
from logger_config import get_logger

logger = get_logger(__name__)

REQUIRED_KEYS = ("model", "theta_star", "c_alpha", "dt", "t_end")
TOP_LEVEL_KEYS = {
    "model", "theta_star", "sigma", "c_alpha", "c0", "t_start", "dt", "t_end", "n_paths",
    "seed", "x0", "theta0", "snapshots", "w1_mode", "sigma_bar", "poisson_theta", "workers",
    "quadrature", "malliavin",
}
QUADRATURE_KEYS = {"L", "n_points"}
MALLIAVIN_KEYS = {"anchors", "pairs", "p", "order", "n_times", "fit_window", "n_paths"}
OVERRIDE_KEYS = {"n_paths", "seed", "dt", "t_end", "workers"}


def _number(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key} must be a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigurationError(f"{key} must be finite, got {value!r}")
    return float(value)


def _integer(key: str, value: Any, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigurationError(f"{key} must be >= {minimum}, got {value}")
    return int(value)


def _numbers(key: str, value: Any) -> Tuple[float, ...]:
    values = value if isinstance(value, (list, tuple)) else [value]
    if not values:
        raise ConfigurationError(f"{key} must not be empty")
    return tuple(_number(key, v) for v in values)


def _integers(key: str, value: Any, minimum: int = 1) -> Tuple[int, ...]:
    values = value if isinstance(value, (list, tuple)) else [value]
    if not values:
        raise ConfigurationError(f"{key} must not be empty")
    return tuple(_integer(key, v, minimum) for v in values)


def _pair(key: str, value: Any) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigurationError(f"{key} entries must be [a, b] pairs, got {value!r}")
    return _number(key, value[0]), _number(key, value[1])


def _reject_unknown(section: str, data: Mapping, allowed: set) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        prefix = f"{section}." if section else ""
        raise ConfigurationError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")


class ConfigService:
    """Builds RunConfig objects from TOML files, mappings and overrides."""

    @staticmethod
    def load(path: Path, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
        """
        Parse and validate a TOML config file.

        Args:
            path: Config file path
            overrides: Command-line values for n_paths, seed, dt, t_end, workers

        Returns:
            Validated RunConfig named after the file stem

        Raises:
            ConfigurationError: unreadable file, TOML syntax, unknown or missing keys
        """
        path = Path(path)
        try:
            with open(path, "rb") as handle:
                data = tomllib.load(handle)
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid TOML: {e}")
        logger.info(f"[CLI] Loaded config {path}")
        return ConfigService.from_mapping(data, name=path.stem, overrides=overrides)

    @staticmethod
    def from_mapping(data: Mapping[str, Any], name: str = "custom",
                     overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
        """Validate a parsed mapping; every error names the offending key."""
        data = dict(data)
        _reject_unknown("", data, TOP_LEVEL_KEYS)
        missing = [k for k in REQUIRED_KEYS if k not in data]
        if missing:
            raise ConfigurationError(f"missing required config key(s): {', '.join(missing)}")

        merged = ConfigService.apply_overrides(data, overrides)

        model = merged["model"]
        if not isinstance(model, str):
            raise ConfigurationError(f"model must be a string, got {model!r}")

        snapshots = merged.get("snapshots")
        if snapshots is not None and not isinstance(snapshots, str):
            snapshots = _numbers("snapshots", snapshots)

        try:
            w1_mode = W1Mode(merged.get("w1_mode", W1Mode.QUANTILE.value))
        except ValueError:
            valid = ", ".join(m.value for m in W1Mode)
            raise ConfigurationError(f"w1_mode must be one of {valid}, got {merged.get('w1_mode')!r}")

        run = RunConfig(
            name=name,
            model=model,
            theta_star=_number("theta_star", merged["theta_star"]),
            c_alphas=_numbers("c_alpha", merged["c_alpha"]),
            dt=_number("dt", merged["dt"]),
            t_end=_number("t_end", merged["t_end"]),
            sigma=_number("sigma", merged.get("sigma", 1.0)),
            c0=_number("c0", merged.get("c0", 1.0)),
            t_start=_number("t_start", merged.get("t_start", 0.0)),
            n_paths=_integer("n_paths", merged.get("n_paths", 1000), minimum=1),
            seed=_integer("seed", merged.get("seed", 0)),
            x0=_number("x0", merged.get("x0", 0.0)),
            theta0=_number("theta0", merged.get("theta0", 0.0)),
            snapshots=snapshots,
            w1_mode=w1_mode,
            sigma_bar=_number("sigma_bar", merged["sigma_bar"]) if "sigma_bar" in merged else None,
            poisson_theta=_number("poisson_theta", merged["poisson_theta"]) if "poisson_theta" in merged else None,
            workers=_integer("workers", merged.get("workers", config.SGDCT_THREADS), minimum=1),
            quadrature=ConfigService._quadrature(merged.get("quadrature", {})),
            malliavin=ConfigService._malliavin(merged.get("malliavin", {})),
        )
        if run.sigma_bar is not None and run.sigma_bar <= 0:
            raise ConfigurationError(f"sigma_bar must be positive, got {run.sigma_bar}")
        ConfigService.validate(run)
        return run

    @staticmethod
    def apply_overrides(data: Mapping[str, Any], overrides: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
        """Command-line values replace config values; None means not given."""
        merged = dict(data)
        for key, value in (overrides or {}).items():
            if key not in OVERRIDE_KEYS:
                raise ConfigurationError(f"{key} cannot be overridden from the command line")
            if value is not None:
                merged[key] = value
        return merged

    @staticmethod
    def _quadrature(section: Any) -> QuadratureSettings:
        if not isinstance(section, Mapping):
            raise ConfigurationError("quadrature must be a table")
        _reject_unknown("quadrature", section, QUADRATURE_KEYS)
        half_width = _number("quadrature.L", section["L"]) if "L" in section else None
        if half_width is not None and half_width <= 0:
            raise ConfigurationError(f"quadrature.L must be positive, got {half_width}")
        n_points = _integer("quadrature.n_points", section.get("n_points", QuadratureSettings.n_points), 3)
        if n_points % 2 == 0:
            raise ConfigurationError(f"quadrature.n_points must be odd, got {n_points}")
        return QuadratureSettings(half_width=half_width, n_points=n_points)

    @staticmethod
    def _malliavin(section: Any) -> MalliavinSettings:
        if not isinstance(section, Mapping):
            raise ConfigurationError("malliavin must be a table")
        _reject_unknown("malliavin", section, MALLIAVIN_KEYS)
        defaults = MalliavinSettings()
        anchors = _numbers("malliavin.anchors", section["anchors"]) if "anchors" in section else None
        pairs = None
        if "pairs" in section:
            if not isinstance(section["pairs"], (list, tuple)):
                raise ConfigurationError("malliavin.pairs must be a list of [r1, r2] pairs")
            pairs = tuple(_pair("malliavin.pairs", p) for p in section["pairs"])
        orders = _integers("malliavin.order", section.get("order", list(defaults.orders)))
        if any(o not in (1, 2) for o in orders):
            raise ConfigurationError(f"malliavin.order must be 1 or 2, got {list(orders)}")
        window = _pair("malliavin.fit_window", section["fit_window"]) if "fit_window" in section else None
        if window is not None and not 0 < window[0] < window[1]:
            raise ConfigurationError(f"malliavin.fit_window must satisfy 0 < lo < hi, got {list(window)}")
        return MalliavinSettings(
            anchors=anchors,
            pairs=pairs,
            powers=_integers("malliavin.p", section.get("p", list(defaults.powers))),
            orders=orders,
            n_times=_integer("malliavin.n_times", section.get("n_times", defaults.n_times), 1),
            fit_window=window,
            n_paths=_integer("malliavin.n_paths", section["n_paths"], 1) if "n_paths" in section else None,
        )

    @staticmethod
    def validate(run: RunConfig) -> None:
        """Pre-compute checks: model name, theta*, and the simulation grid of every C_alpha."""
        run.builtin()
        for c_alpha in run.c_alphas:
            run.sim_config(c_alpha)

    @staticmethod
    def resolve_workers(cli_value: Optional[int], run: Optional[RunConfig] = None) -> int:
        """CLI flag, else the config key (which already fell back to SGDCT_THREADS)."""
        if cli_value is not None:
            return _integer("workers", cli_value, minimum=1)
        return run.workers if run is not None else config.SGDCT_THREADS
