"""
Poisson-equation pipeline: centered solutions of L_x v = H, averaged
objective derivatives, and the limiting variance of the fluctuations.
"""

import time
from typing import Optional

import numpy as np
from scipy import integrate

from ..models.constants import LabConfig, Regime
from ..models.drift import DriftModel
from ..models.errors import CenteringError, DomainError
from ..models.results import DensityTable, PoissonSolution, VarianceReport
from .drift_service import DriftService
from logger_config import get_logger

logger = get_logger(__name__)

_G_ORDERS = ("g", "g_theta", "g_thetatheta", "g_thetathetatheta")


class PoissonService:
    """Quadrature solver for the one-dimensional Poisson equation against the invariant measure."""

    @staticmethod
    def solve(source: np.ndarray, model: DriftModel, density: DensityTable) -> PoissonSolution:
        """
        Solve L_x v = H with L_x v = f* v_x + (sigma^2/2) v_xx and mu-average of v zero.

        Uses v_x(x) = (2/sigma^2) m(x)^-1 int_{-L}^x H m on the left half and the
        equivalent upper-tail form -(2/sigma^2) m(x)^-1 int_x^L H m on the right
        half, so neither tail divides a cancelled difference by a tiny density.
        Where m underflows, v_x takes its tail limit H / f*.

        Args:
            source: H on the density grid
            model: Drift model (f* and sigma)
            density: Invariant density table

        Returns:
            PoissonSolution with both centering residuals populated

        Raises:
            CenteringError: |int H dmu| exceeds the centering tolerance
            DomainError: H is non-finite
        """
        source = np.broadcast_to(np.asarray(source, dtype=float), density.x.shape).copy()
        if not np.all(np.isfinite(source)):
            raise DomainError("Poisson source H is non-finite on the grid")

        source_residual = abs(density.expectation(source))
        if source_residual > LabConfig.CENTERING_TOLERANCE:
            raise CenteringError(
                f"source is not centered: |int H dmu| = {source_residual:.3e} "
                f"> {LabConfig.CENTERING_TOLERANCE:.0e}"
            )

        if density.point_mass:
            zeros = np.zeros_like(density.x)
            return PoissonSolution(
                x=density.x, v=zeros, v_x=zeros.copy(), source=source,
                centering_residual=0.0, source_residual=source_residual,
            )

        x, m = density.x, density.m
        h = x[1] - x[0]
        scale = 2.0 / model.sigma ** 2
        centered = source - density.expectation(source)
        weighted = centered * m

        lower = integrate.cumulative_simpson(weighted, dx=h, initial=0.0)
        upper = integrate.cumulative_simpson(weighted[::-1], dx=h, initial=0.0)[::-1]

        positive = m > np.finfo(float).tiny
        safe_m = np.where(positive, m, 1.0)
        vx_lower = np.where(positive, scale * lower / safe_m, np.nan)
        vx_upper = np.where(positive, -scale * upper / safe_m, np.nan)

        left = x <= 0.0
        v_x = np.where(left, vx_lower, vx_upper)
        if not np.all(positive):
            drift = model.f_star(x)
            v_x = np.where(positive, v_x, centered / drift)

        inner = np.abs(x) <= 0.5 * x[-1]
        tail_discrepancy = float(np.max(np.abs(vx_lower[inner] - vx_upper[inner])))

        v = integrate.cumulative_simpson(v_x, dx=h, initial=0.0)
        v -= density.expectation(v)
        centering_residual = abs(density.expectation(v))
        if centering_residual > LabConfig.CENTERING_RESIDUAL_TARGET:
            logger.warning(f"[POISSON] {model.name}: centering residual {centering_residual:.2e} above target")

        logger.debug(
            f"[POISSON] {model.name}: source residual={source_residual:.2e}, "
            f"centering residual={centering_residual:.2e}, tail discrepancy={tail_discrepancy:.2e}"
        )
        return PoissonSolution(
            x=x, v=v, v_x=v_x, source=source,
            centering_residual=centering_residual,
            source_residual=source_residual,
            tail_discrepancy=tail_discrepancy,
        )

    @staticmethod
    def gbar(model: DriftModel, density: DensityTable, theta: float, order: int) -> float:
        """
        Averaged objective derivative d^order/dtheta^order of int g(x, theta) mu(dx).

        Args:
            model: Drift model
            density: Invariant density table
            theta: Parameter value
            order: 0, 1, 2 or 3

        Returns:
            The quadrature value

        Raises:
            DomainError: order out of range or non-finite integrand
        """
        if order not in range(len(_G_ORDERS)):
            raise DomainError(f"gbar order must be 0..3, got {order}")
        partials = DriftService.g_partials(model, density.x, theta, checked=False)
        integrand = getattr(partials, _G_ORDERS[order])
        if not np.all(np.isfinite(integrand)):
            raise DomainError(f"gbar integrand {_G_ORDERS[order]} is non-finite at theta={theta}")
        return density.expectation(integrand)

    @staticmethod
    def fluctuation_source(model: DriftModel, density: DensityTable, theta: float) -> np.ndarray:
        """H(x) = gbar_theta(theta) - g_theta(x, theta), centered by construction."""
        g_theta = DriftService.g_partials(model, density.x, theta).g_theta
        g_theta = np.broadcast_to(g_theta, density.x.shape)
        return density.expectation(g_theta) - g_theta

    @staticmethod
    def fluctuation_solution(model: DriftModel, density: DensityTable, theta: float) -> PoissonSolution:
        """Solution Psi of L_x Psi = gbar_theta(theta) - g_theta(x, theta)."""
        return PoissonService.solve(PoissonService.fluctuation_source(model, density, theta), model, density)

    @staticmethod
    def h_values(model: DriftModel, density: DensityTable, theta: float,
                 psi: Optional[PoissonSolution] = None) -> np.ndarray:
        """h(x, theta) = sigma^2 [f_theta sigma^-2 - Psi_x]^2 on the density grid."""
        if psi is None:
            psi = PoissonService.fluctuation_solution(model, density, theta)
        sigma2 = model.sigma ** 2
        f_theta = np.broadcast_to(model.f_theta(density.x, theta), density.x.shape)
        return sigma2 * (f_theta / sigma2 - psi.v_x) ** 2

    @staticmethod
    def h_bar(model: DriftModel, density: DensityTable, theta: float) -> float:
        """Average of h(., theta) against the invariant measure."""
        return density.expectation(PoissonService.h_values(model, density, theta))

    @staticmethod
    def classify(c_gbar_c_alpha: float) -> Regime:
        """Convergent when C_gbar C_alpha > 1/2."""
        return Regime.CONVERGENT if c_gbar_c_alpha > 0.5 else Regime.DIVERGENT

    @staticmethod
    def predicted_w1_exponent(c_gbar_c_alpha: float) -> Optional[float]:
        """
        Power of t in the Wasserstein rate: -1/4 (up to a log factor) when
        C_gbar C_alpha >= 3/4, -(C_gbar C_alpha - 1/2) between 1/2 and 3/4,
        and None when the fluctuations do not converge.
        """
        if c_gbar_c_alpha >= 0.75:
            return -0.25
        if c_gbar_c_alpha > 0.5:
            return -(c_gbar_c_alpha - 0.5)
        return None

    @staticmethod
    def limiting_variance(model: DriftModel, density: DensityTable, theta_star: float,
                          c_alpha: float) -> VarianceReport:
        """
        Closed-form limiting variance Sigma_bar = C_alpha^2 h_bar / (2 (C_alpha C_gbar - 1/2)).

        The fluctuation Poisson solution is computed even at theta* so that
        misspecified models are handled; for the builtin models it is ~0.

        Args:
            model: Drift model
            density: Invariant density table
            theta_star: Optimum theta*
            c_alpha: Learning-rate magnitude

        Returns:
            VarianceReport; sigma_bar is None in the divergent regime
        """
        start = time.time()
        c_gbar = PoissonService.gbar(model, density, theta_star, 2)
        psi = PoissonService.fluctuation_solution(model, density, theta_star)
        h_bar = density.expectation(PoissonService.h_values(model, density, theta_star, psi))
        product = c_alpha * c_gbar
        regime = PoissonService.classify(product)

        sigma_bar = None
        if regime is Regime.CONVERGENT:
            sigma_bar = c_alpha ** 2 * h_bar / (2.0 * (product - 0.5))
        else:
            logger.warning(
                f"[POISSON] {model.name}: C_gbar*C_alpha={product:.4g} <= 1/2, "
                f"limiting variance does not exist"
            )

        logger.info(
            f"[POISSON] {model.name}: theta*={theta_star}, C_alpha={c_alpha}, "
            f"C_gbar={c_gbar:.6g}, h_bar={h_bar:.6g}, Sigma_bar={sigma_bar}, "
            f"({time.time() - start:.2f}s)"
        )
        return VarianceReport(
            model=model.name, theta_star=theta_star, c_alpha=c_alpha,
            c_gbar=c_gbar, h_bar=h_bar, regime=regime, sigma_bar=sigma_bar,
            predicted_w1_exponent=PoissonService.predicted_w1_exponent(product),
        )
