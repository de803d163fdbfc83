"""
Shared fixtures for the laboratory tests.
"""

from pathlib import Path

import pytest

from src.models.constants import ModelKind
from src.models.drift import BuiltinModel


@pytest.fixture
def ou_unit():
    """OU model with c* = 1 (stationary variance 1/2)."""
    return BuiltinModel(ModelKind.OU, theta_star=1.0).build()


@pytest.fixture
def ou_example():
    """OU model of the second published example."""
    return BuiltinModel(ModelKind.OU, theta_star=0.031).build()


@pytest.fixture
def cubic_example():
    """Cubic model of the third published example."""
    return BuiltinModel(ModelKind.CUBIC, theta_star=0.035).build()


@pytest.fixture
def x_independent():
    """X-independent model of the first published example."""
    return BuiltinModel(ModelKind.X_INDEPENDENT, theta_star=2.3).build()


@pytest.fixture
def write_config(tmp_path):
    """Factory writing TOML text to a file under tmp_path."""
    def _write(text: str, name: str = "run.toml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write
