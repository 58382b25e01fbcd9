"""
Shared fixtures: seeded generators, a throwaway output directory and the
--runslow switch for the desk-scale reproduction runs
"""
import numpy as np
import pytest

from orbitsym.config import ExperimentConfig
from orbitsym.extensions import SeedStreams


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale reproduction tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale reproduction run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def streams():
    return SeedStreams(7)


@pytest.fixture
def well_conditioned(rng):
    """Random 4x4 matrices with singular values bounded away from zero"""
    def make(count=1, n=4):
        q1, _ = np.linalg.qr(rng.standard_normal((count, n, n)))
        q2, _ = np.linalg.qr(rng.standard_normal((count, n, n)))
        s = rng.uniform(0.5, 2.0, size=(count, n))
        return q1 @ (s[:, :, None] * q2)
    return make


@pytest.fixture
def small_particle_config(tmp_path):
    """Particle config small enough for a unit-test training run"""
    cfg = ExperimentConfig.for_task("particle")
    cfg.epochs = 2
    cfg.batch = 16
    cfg.samples_eval = 2
    cfg.base_hidden = 16
    cfg.base_depth = 2
    cfg.symmetrizer.hidden = 16
    cfg.symmetrizer.depth = 2
    cfg.symmetrizer.d_eps = 4
    cfg.data.n_train = 32
    cfg.data.n_val = 16
    cfg.data.n_test = 16
    cfg.out_dir = str(tmp_path / "run")
    return cfg


@pytest.fixture
def small_digits_config(tmp_path):
    """Rotated point-set config small enough for a unit-test training run"""
    cfg = ExperimentConfig.for_task("rotated-digits")
    cfg.epochs = 1
    cfg.batch = 8
    cfg.samples_eval = 2
    cfg.base_hidden = 16
    cfg.base_depth = 2
    cfg.symmetrizer.hidden = 8
    cfg.symmetrizer.depth = 2
    cfg.symmetrizer.d_eps = 2
    cfg.data.n_train = 16
    cfg.data.n_val = 8
    cfg.data.n_test = 8
    cfg.data.points = 24
    cfg.out_dir = str(tmp_path / "run")
    return cfg
