"""
Shared fixtures for the opnorm-lab test suite.
"""

import numpy as np
import pytest

from opnorm_lab.models.factor_models import REFERENCE_BETAS
from opnorm_lab.models.process_models import ParamGrid, SubGaussianSpec
from opnorm_lab.utils.logger import setup_logging


@pytest.fixture(autouse=True, scope="session")
def _quiet_logging():
    setup_logging("WARNING")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def reference_grid() -> ParamGrid:
    return ParamGrid.line(REFERENCE_BETAS)


@pytest.fixture
def trig_spec() -> SubGaussianSpec:
    return SubGaussianSpec(family="trig_process")
