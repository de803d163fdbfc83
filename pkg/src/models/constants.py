"""
Constants and enums used throughout the laboratory.
"""

from enum import Enum


class ModelKind(Enum):
    """Builtin drift models."""
    X_INDEPENDENT = "x_independent"
    OU = "ou"
    CUBIC = "cubic"


class Regime(Enum):
    """Convergence regime of the fluctuation process."""
    CONVERGENT = "convergent"
    DIVERGENT = "divergent"


class W1Mode(Enum):
    """How the Gaussian limit is represented when measuring W1."""
    PAIRED_EMPIRICAL = "paired_empirical"
    QUANTILE = "quantile"


class LabConfig:
    """Laboratory-wide numerical constants."""

    # Model probing
    PROBE_GRID_HALF_WIDTH = 4.0
    PROBE_GRID_POINTS = 81

    # Quadrature
    DEFAULT_GRID_POINTS = 2 ** 14 + 1
    TRUNCATION_SD_MULTIPLE = 8.0
    TAIL_RATIO_TOLERANCE = 1e-12
    MAX_DOMAIN_REFINEMENTS = 8
    CENTERING_TOLERANCE = 1e-6
    CENTERING_RESIDUAL_TARGET = 1e-8

    # Simulation
    SNAPSHOT_GRID_RTOL = 1e-9
    PATH_CHUNK_SIZE = 128
    NOISE_BLOCK_STEPS = 512
    MAX_FLAGGED_FRACTION = 0.01

    # Malliavin
    MIN_MALLIAVIN_ANCHOR = 1.0
    DEFAULT_ANCHOR_FRACTIONS = (1.0 / 64.0, 1.0 / 16.0, 1.0 / 4.0)
    DEFAULT_MOMENT_POWERS = (1, 2)
    DEFAULT_MOMENT_TIMES = 16
    MIN_MOMENT_PATHS = 200

    # Statistics
    MIN_FIT_POINTS = 3
    PAIRED_REFERENCE_STREAM = 0x5747_3131  # dedicated substream tag for the W1 comparison sample
    NON_DECAYING_SLOPE = -0.05

    # Output
    CSV_FLOAT_FORMAT = "%.17g"
    COMMENT_PREFIX = "# "
