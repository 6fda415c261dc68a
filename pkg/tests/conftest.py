"""Configure pytest for the project."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root directory to Python path
root_dir = Path(__file__).parent.parent
sys.path.insert(0, str(root_dir))

from src.models.kse import KseParams  # noqa: E402
from src.models.modal import CoefficientSeries  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance runs, enabled with CROM_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.getenv("CROM_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set CROM_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def catalog_url(tmp_path: Path) -> str:
    """A throwaway SQLite run catalog."""
    return f"sqlite:///{tmp_path / 'catalog.db'}"


@pytest.fixture
def kse_params() -> KseParams:
    """Default chaotic-regime parameters."""
    return KseParams()


@pytest.fixture
def ou_series() -> CoefficientSeries:
    """Two independent Ornstein-Uhlenbeck processes da = -a dt + 0.5 dW."""
    rng = np.random.default_rng(11)
    dt, steps = 0.01, 20_000
    a = np.zeros((2, steps))
    noise = 0.5 * np.sqrt(dt) * rng.standard_normal((2, steps))
    for j in range(1, steps):
        a[:, j] = a[:, j - 1] - a[:, j - 1] * dt + noise[:, j]
    return CoefficientSeries(times=dt * np.arange(steps), values=a)
