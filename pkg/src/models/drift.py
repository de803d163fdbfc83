"""
Drift models: the unknown truth f*(x) and the parametric family f(x, theta).

Every partial is a vectorized callable; constant partials broadcast against
their arguments. Builtin models are assembled from module-level functions and
functools.partial so that a DriftModel pickles cleanly into worker processes.
"""

from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, Union

import numpy as np

from .constants import ModelKind
from .errors import ConfigurationError

ArrayLike = Union[float, np.ndarray]
StarFn = Callable[[ArrayLike], np.ndarray]
ModelFn = Callable[[ArrayLike, ArrayLike], np.ndarray]


@dataclass(frozen=True)
class DriftModel:
    """
    A drift model with all partials used by the simulation and derivative SDEs.

    Attributes:
        name: Human-readable model name
        sigma: Diffusion coefficient of the data process
        has_x_process: False when the model does not depend on x at all
        f_star, f_star_x, f_star_xx: The true drift and its x-derivatives
        f, f_theta, f_thetatheta, f_thetathetatheta: Model and theta-partials
        f_x, f_xx, f_xtheta, f_xthetatheta, f_xxtheta: Partials involving x
    """
    name: str
    sigma: float
    has_x_process: bool
    f_star: StarFn
    f_star_x: StarFn
    f_star_xx: StarFn
    f: ModelFn
    f_theta: ModelFn
    f_thetatheta: ModelFn
    f_thetathetatheta: ModelFn
    f_x: ModelFn
    f_xx: ModelFn
    f_xtheta: ModelFn
    f_xthetatheta: ModelFn
    f_xxtheta: ModelFn

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ConfigurationError(f"sigma must be a positive finite number, got {self.sigma}")

    def partials_at(self, x: ArrayLike, theta: ArrayLike) -> Dict[str, np.ndarray]:
        """Evaluate every model partial at (x, theta), keyed by field name."""
        values = {
            "f_star": self.f_star(x),
            "f_star_x": self.f_star_x(x),
            "f_star_xx": self.f_star_xx(x),
        }
        for key in ("f", "f_theta", "f_thetatheta", "f_thetathetatheta", "f_x", "f_xx",
                    "f_xtheta", "f_xthetatheta", "f_xxtheta"):
            values[key] = getattr(self, key)(x, theta)
        return values


@dataclass(frozen=True)
class GPartials:
    """Partials of the distance function g(x, theta) = 1/2 sigma^-2 (f - f*)^2."""
    g: np.ndarray
    g_theta: np.ndarray
    g_thetatheta: np.ndarray
    g_thetathetatheta: np.ndarray
    g_xtheta: np.ndarray
    g_thetathetax: np.ndarray
    g_xxtheta: np.ndarray


def _shape(*args: ArrayLike):
    return np.broadcast_shapes(*(np.shape(a) for a in args))


def _zero_star(x: ArrayLike) -> np.ndarray:
    return np.zeros(np.shape(x))


def _zero(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return np.zeros(_shape(x, theta))


def _one(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return np.ones(_shape(x, theta))


def _const_star(value: float, x: ArrayLike) -> np.ndarray:
    return np.full(np.shape(x), value, dtype=float)


def _const(value: float, x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return np.full(_shape(x, theta), value, dtype=float)


# x-independent: f(x, theta) = theta, f* = theta*

def _theta_model(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return np.asarray(theta, dtype=float) + np.zeros(_shape(x, theta))


# OU: f(x, theta) = -theta x, f*(x) = -theta* x

def _linear_star(theta_star: float, x: ArrayLike) -> np.ndarray:
    return -theta_star * np.asarray(x, dtype=float)


def _linear(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -np.asarray(theta, dtype=float) * np.asarray(x, dtype=float)


def _linear_theta(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -np.asarray(x, dtype=float) + np.zeros(_shape(x, theta))


def _linear_x(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -np.asarray(theta, dtype=float) + np.zeros(_shape(x, theta))


# Cubic: f(x, theta) = -theta x^3, f*(x) = -theta* x^3

def _cubic_star(theta_star: float, x: ArrayLike) -> np.ndarray:
    return -theta_star * np.asarray(x, dtype=float) ** 3


def _cubic_star_x(theta_star: float, x: ArrayLike) -> np.ndarray:
    return -3.0 * theta_star * np.asarray(x, dtype=float) ** 2


def _cubic_star_xx(theta_star: float, x: ArrayLike) -> np.ndarray:
    return -6.0 * theta_star * np.asarray(x, dtype=float)


def _cubic(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -np.asarray(theta, dtype=float) * np.asarray(x, dtype=float) ** 3


def _cubic_theta(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -np.asarray(x, dtype=float) ** 3 + np.zeros(_shape(x, theta))


def _cubic_x(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -3.0 * np.asarray(theta, dtype=float) * np.asarray(x, dtype=float) ** 2


def _cubic_xx(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -6.0 * np.asarray(theta, dtype=float) * np.asarray(x, dtype=float)


def _cubic_xtheta(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -3.0 * np.asarray(x, dtype=float) ** 2 + np.zeros(_shape(x, theta))


def _cubic_xxtheta(x: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return -6.0 * np.asarray(x, dtype=float) + np.zeros(_shape(x, theta))


@dataclass(frozen=True)
class BuiltinModel:
    """
    One of the three builtin examples.

    Attributes:
        kind: Which builtin family
        theta_star: The true parameter
        sigma: Diffusion coefficient (default 1)
    """
    kind: ModelKind
    theta_star: float
    sigma: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.theta_star):
            raise ConfigurationError(f"theta_star must be finite, got {self.theta_star}")
        if self.kind in (ModelKind.OU, ModelKind.CUBIC) and self.theta_star <= 0:
            raise ConfigurationError(
                f"theta_star must be > 0 for the {self.kind.value} model "
                f"(ergodicity), got {self.theta_star}"
            )
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ConfigurationError(f"sigma must be a positive finite number, got {self.sigma}")

    @classmethod
    def from_name(cls, name: str, theta_star: float, sigma: float = 1.0) -> 'BuiltinModel':
        """Create a builtin model from its config name."""
        try:
            kind = ModelKind(name)
        except ValueError:
            valid = ", ".join(k.value for k in ModelKind)
            raise ConfigurationError(f"model: unknown model {name!r} (expected one of {valid})")
        return cls(kind=kind, theta_star=float(theta_star), sigma=float(sigma))

    def build(self) -> DriftModel:
        """Assemble the DriftModel with all partials."""
        ts = self.theta_star
        if self.kind is ModelKind.X_INDEPENDENT:
            return DriftModel(
                name=self.kind.value, sigma=self.sigma, has_x_process=False,
                f_star=partial(_const_star, ts), f_star_x=_zero_star, f_star_xx=_zero_star,
                f=_theta_model, f_theta=_one, f_thetatheta=_zero, f_thetathetatheta=_zero,
                f_x=_zero, f_xx=_zero, f_xtheta=_zero, f_xthetatheta=_zero, f_xxtheta=_zero,
            )
        if self.kind is ModelKind.OU:
            return DriftModel(
                name=self.kind.value, sigma=self.sigma, has_x_process=True,
                f_star=partial(_linear_star, ts), f_star_x=partial(_const_star, -ts),
                f_star_xx=_zero_star,
                f=_linear, f_theta=_linear_theta, f_thetatheta=_zero, f_thetathetatheta=_zero,
                f_x=_linear_x, f_xx=_zero, f_xtheta=partial(_const, -1.0),
                f_xthetatheta=_zero, f_xxtheta=_zero,
            )
        return DriftModel(
            name=self.kind.value, sigma=self.sigma, has_x_process=True,
            f_star=partial(_cubic_star, ts), f_star_x=partial(_cubic_star_x, ts),
            f_star_xx=partial(_cubic_star_xx, ts),
            f=_cubic, f_theta=_cubic_theta, f_thetatheta=_zero, f_thetathetatheta=_zero,
            f_x=_cubic_x, f_xx=_cubic_xx, f_xtheta=_cubic_xtheta,
            f_xthetatheta=_zero, f_xxtheta=_cubic_xxtheta,
        )
