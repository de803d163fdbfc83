"""
Source package initialization.
"""

from .models.constants import ModelKind, Regime, W1Mode, LabConfig
from .models.drift import BuiltinModel, DriftModel
from .models.simulation import SimConfig, PathEnsemble
from .services.drift_service import DriftService
from .services.density_service import DensityService
from .services.poisson_service import PoissonService
from .services.simulation_service import SimulationService
from .services.malliavin_service import MalliavinService
from .services.stats_service import StatsService
from .services.experiment_service import ExperimentService
from .ui.cli import LabCLI, dispatch

__all__ = [
    'ModelKind',
    'Regime',
    'W1Mode',
    'LabConfig',
    'BuiltinModel',
    'DriftModel',
    'SimConfig',
    'PathEnsemble',
    'DriftService',
    'DensityService',
    'PoissonService',
    'SimulationService',
    'MalliavinService',
    'StatsService',
    'ExperimentService',
    'LabCLI',
    'dispatch',
]
