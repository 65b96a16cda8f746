"""
Shared test fixtures and configuration.
This file is automatically loaded by pytest.
"""
import logging
import os
import warnings
from pathlib import Path

import numpy as np
import pytest

# Keep the suite independent of a developer's .env / shell
for _key in list(os.environ):
    if _key.startswith("INVDENS_"):
        del os.environ[_key]

from invdens.core.config import get_settings
from invdens.models.diffusion import ObservationScheme
from invdens.services.diffusion_service import DiffusionService
from invdens.services.kernel_service import KernelService

REPO_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture(autouse=True)
def fresh_settings():
    """Re-read settings for every test so monkeypatched env vars take effect."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(autouse=True)
def restore_logging():
    """The CLI reconfigures the root logger; put it back after each test."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers = handlers
    root.setLevel(level)
    logging.captureWarnings(False)


@pytest.fixture
def ou_1d():
    """Standard-normal OU model (theta = 1/2, d = 1)."""
    return DiffusionService.ou_model(0.5, 1)


@pytest.fixture
def ou_3d():
    return DiffusionService.ou_model(0.5, 3)


@pytest.fixture
def small_scheme():
    """n = 4096 observations at delta = 2^-5 (T = 128)."""
    return ObservationScheme(n=4096, delta_n=2.0 ** -5, tau_n=0.0, seed=7)


@pytest.fixture
def noisy_series(ou_1d, small_scheme):
    latent = DiffusionService.simulate(ou_1d, small_scheme)
    return DiffusionService.add_noise(latent, 0.5, small_scheme.seed)


@pytest.fixture
def uniform_kernel():
    """Order-2 Legendre kernel, i.e. 1/2 on [-1, 1]."""
    return KernelService.make_order_kernel(2)


@pytest.fixture
def no_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
