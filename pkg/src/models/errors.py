"""
Exception hierarchy for the laboratory.

Configuration problems are detected before any compute and map to CLI exit
code 1; numerical problems surface during compute and map to exit code 2.
"""


class LabError(Exception):
    """Base class for all laboratory errors."""


class ConfigurationError(LabError, ValueError):
    """Invalid run configuration (bad key, off-grid time, unknown name)."""


class NumericalError(LabError, ArithmeticError):
    """A numerical failure during compute."""


class DomainError(NumericalError):
    """A non-finite partial, integrand, or an out-of-domain argument."""


class TruncationError(NumericalError):
    """The truncated quadrature domain is too small for the density."""


class DivergenceError(NumericalError):
    """The invariant density is not integrable."""


class CenteringError(NumericalError):
    """A Poisson source does not integrate to zero against the invariant measure."""


class FitError(NumericalError):
    """A log-log fit cannot be formed from the supplied points."""


class SequencingError(NumericalError):
    """A propagation step ran before its inputs were available."""


class SampleSizeError(NumericalError):
    """Sample sizes are mismatched or too small."""
