"""
Service for distance-function partials and model health checks.
"""

from typing import List

import numpy as np

from ..models.constants import LabConfig
from ..models.drift import ArrayLike, DriftModel, GPartials
from ..models.errors import DomainError
from logger_config import get_logger

logger = get_logger(__name__)


class DriftService:
    """Derives g-partials from the f- and f*-partials and probes model assumptions."""

    @staticmethod
    def g_value(model: DriftModel, x: ArrayLike, theta: ArrayLike) -> np.ndarray:
        """Distance function g(x, theta) = 1/2 sigma^-2 (f - f*)^2."""
        err = model.f(x, theta) - model.f_star(x)
        return 0.5 * err ** 2 / model.sigma ** 2

    @staticmethod
    def g_partials(model: DriftModel, x: ArrayLike, theta: ArrayLike, checked: bool = True) -> GPartials:
        """
        All partials of g appearing in the parameter SDE and its derivative SDEs.

        With e = f - f* and s = sigma^-2 the chain rule gives
            g_theta          = s e f_theta
            g_thetatheta     = s (f_theta^2 + e f_thetatheta)
            g_thetathetatheta= s (3 f_theta f_thetatheta + e f_thetathetatheta)
            g_xtheta         = s (e_x f_theta + e f_xtheta)
            g_thetathetax    = s (2 f_theta f_xtheta + e_x f_thetatheta + e f_xthetatheta)
            g_xxtheta        = s (e_xx f_theta + 2 e_x f_xtheta + e f_xxtheta)
        where e_x = f_x - f*_x and e_xx = f_xx - f*_xx.

        Args:
            model: The drift model
            x: Data-process value(s)
            theta: Parameter value(s)
            checked: Raise on non-finite partials (the path integrators flag instead)

        Returns:
            GPartials evaluated at (x, theta)

        Raises:
            DomainError: A model partial is non-finite at (x, theta)
        """
        p = model.partials_at(x, theta)
        if checked:
            for key, value in p.items():
                if not np.all(np.isfinite(value)):
                    raise DomainError(f"partial {key} is non-finite at x={x}, theta={theta}")

        s = 1.0 / model.sigma ** 2
        e = p["f"] - p["f_star"]
        e_x = p["f_x"] - p["f_star_x"]
        e_xx = p["f_xx"] - p["f_star_xx"]
        f_t, f_tt, f_ttt = p["f_theta"], p["f_thetatheta"], p["f_thetathetatheta"]
        f_xt, f_xtt, f_xxt = p["f_xtheta"], p["f_xthetatheta"], p["f_xxtheta"]

        return GPartials(
            g=0.5 * s * e ** 2,
            g_theta=s * e * f_t,
            g_thetatheta=s * (f_t ** 2 + e * f_tt),
            g_thetathetatheta=s * (3.0 * f_t * f_tt + e * f_ttt),
            g_xtheta=s * (e_x * f_t + e * f_xt),
            g_thetathetax=s * (2.0 * f_t * f_xt + e_x * f_tt + e * f_xtt),
            g_xxtheta=s * (e_xx * f_t + 2.0 * e_x * f_xt + e * f_xxt),
        )

    @staticmethod
    def probe_grid() -> np.ndarray:
        """Points where model assumptions are probed."""
        half = LabConfig.PROBE_GRID_HALF_WIDTH
        return np.linspace(-half, half, LabConfig.PROBE_GRID_POINTS)

    @staticmethod
    def check_model(model: DriftModel, theta: float) -> List[str]:
        """
        Probe the ergodicity proxy f*_x <= 0 and the finiteness of all partials.

        A violated ergodicity proxy is a warning (the cubic model has
        f*_x(0) = 0); a non-finite partial is an error.

        Args:
            model: The drift model
            theta: Parameter value at which the model partials are probed

        Returns:
            List of warning messages (empty when every check passes)

        Raises:
            DomainError: A partial is non-finite on the probe grid
        """
        x = DriftService.probe_grid()
        for key, value in model.partials_at(x, theta).items():
            bad = ~np.isfinite(value)
            if np.any(bad):
                raise DomainError(f"partial {key} is non-finite at x={x[bad][0]} (theta={theta})")

        warnings = []
        if model.has_x_process:
            fx = model.f_star_x(x)
            if np.any(fx > 0):
                warnings.append(
                    f"f_star_x > 0 at x={x[fx > 0][0]:.4g}: ergodicity proxy violated"
                )
            # strict negativity fails at isolated points such as x = 0 for the cubic drift
            flat = np.isclose(fx, 0.0, atol=1e-14)
            if np.any(flat):
                warnings.append(
                    f"f_star_x = 0 at x={x[flat][0]:.4g}: no uniform contraction constant C* > 0"
                )
        for message in warnings:
            logger.warning(f"[MODEL] {model.name}: {message}")
        return warnings
