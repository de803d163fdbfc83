"""
Invariant density of the one-dimensional data diffusion.
"""

from typing import Optional

import numpy as np
from scipy import integrate

from ..models.constants import LabConfig
from ..models.drift import DriftModel
from ..models.errors import DivergenceError, DomainError, TruncationError
from ..models.results import DensityTable, UniformGrid
from logger_config import get_logger

logger = get_logger(__name__)


class DensityService:
    """Builds normalized invariant densities m(x) proportional to exp((2/sigma^2) int_0^x f*)."""

    @staticmethod
    def invariant_density(model: DriftModel, grid: UniformGrid) -> DensityTable:
        """
        Tabulate the invariant density on a symmetric grid.

        The log-density is accumulated with cumulative Simpson quadrature and
        anchored at x = 0; normalization uses the composite trapezoid rule.

        Args:
            model: Drift model whose f* defines the diffusion
            grid: Symmetric uniform grid with an odd point count

        Returns:
            DensityTable with unit mass on the grid and the estimated tail mass

        Raises:
            DomainError: f* is non-finite on the grid
            DivergenceError: the drift does not push inward at the boundary
            TruncationError: m(+-L)/max(m) exceeds the tail tolerance
        """
        x = grid.x
        drift = np.asarray(model.f_star(x), dtype=float)
        if not np.all(np.isfinite(drift)):
            raise DomainError(f"f_star is non-finite on [-{grid.half_width}, {grid.half_width}]")

        scale = 2.0 / model.sigma ** 2
        phi = scale * integrate.cumulative_simpson(drift, x=x, initial=0.0)
        phi -= phi[grid.n_points // 2]

        # an integrable density needs f* pointing inward at both ends
        if drift[0] <= 0 or drift[-1] >= 0 or np.argmax(phi) in (0, grid.n_points - 1):
            raise DivergenceError(
                f"invariant density of {model.name} is not integrable: "
                f"f*(-L)={drift[0]:.4g}, f*(L)={drift[-1]:.4g}"
            )

        peak = phi.max()
        tail_ratio = float(np.exp(max(phi[0], phi[-1]) - peak))
        if tail_ratio > LabConfig.TAIL_RATIO_TOLERANCE:
            raise TruncationError(
                f"domain too small: m(+-L)/max(m) = {tail_ratio:.3e} at L={grid.half_width}"
            )

        m = np.exp(phi - peak)
        mass = integrate.trapezoid(m, x)
        m = m / mass

        # Laplace estimate of the mass beyond each end: m(L) / |phi'(L)|
        tail_mass = float(m[0] / abs(scale * drift[0]) + m[-1] / abs(scale * drift[-1]))
        logger.debug(
            f"[DENSITY] {model.name}: L={grid.half_width:.4g}, n={grid.n_points}, "
            f"tail ratio={tail_ratio:.3e}, tail mass={tail_mass:.3e}"
        )
        return DensityTable(x=x, m=m, tail_ratio=tail_ratio, tail_mass=tail_mass)

    @staticmethod
    def auto_density(model: DriftModel, n_points: int = LabConfig.DEFAULT_GRID_POINTS) -> DensityTable:
        """
        Size the domain to a multiple of the stationary standard deviation.

        Starts from L = 8 sigma, doubles L on truncation failures and resizes
        to 8 standard deviations of the tabulated density until stable.

        Args:
            model: Drift model
            n_points: Grid point count (odd)

        Returns:
            DensityTable on the final domain
        """
        half_width = LabConfig.TRUNCATION_SD_MULTIPLE * model.sigma
        table: Optional[DensityTable] = None
        for attempt in range(LabConfig.MAX_DOMAIN_REFINEMENTS):
            try:
                table = DensityService.invariant_density(model, UniformGrid(half_width, n_points))
            except TruncationError:
                logger.debug(f"[DENSITY] truncation at L={half_width:.4g}, doubling")
                half_width *= 2.0
                continue
            mean = table.expectation(table.x)
            sd = np.sqrt(table.expectation((table.x - mean) ** 2))
            target = LabConfig.TRUNCATION_SD_MULTIPLE * sd
            if abs(target - half_width) <= 0.05 * half_width:
                break
            half_width = target
        if table is None:
            raise TruncationError(
                f"domain too small for {model.name} after "
                f"{LabConfig.MAX_DOMAIN_REFINEMENTS} refinements (L={half_width:.4g})"
            )
        logger.info(f"[DENSITY] {model.name}: L={table.x[-1]:.4g}, n={n_points}")
        return table

    @staticmethod
    def for_model(model: DriftModel, grid: Optional[UniformGrid] = None,
                  n_points: int = LabConfig.DEFAULT_GRID_POINTS) -> DensityTable:
        """
        Density table for any model.

        Models without a data process get a point mass at x = 0; otherwise an
        explicit grid is used as given or the domain is sized automatically.
        """
        if not model.has_x_process:
            return DensityTable.degenerate()
        if grid is not None:
            return DensityService.invariant_density(model, grid)
        return DensityService.auto_density(model, n_points)
