"""
Desk-scale reproduction runs. Minutes each on a desktop CPU; run with --runslow.
"""
import numpy as np
import pytest
from scipy.stats import spearmanr

from orbitsym.config import Config, ExperimentConfig
from orbitsym.extensions import SeedStreams
from orbitsym.services.checkpoint_service import CheckpointService
from orbitsym.services.data_service import DataService
from orbitsym.services.symmetrization_service import SymmetrizationService
from orbitsym.services.training_service import TrainingService

PARTICLE_METHODS = ("scalar-invariant", "ps-orbit", "canonical-orbit", "base-aug", "base")
SEEDS = (0, 1, 2)

pytestmark = pytest.mark.slow


@pytest.fixture(autouse=True)
def no_wallclock(monkeypatch):
    monkeypatch.setattr(Config, "WALLCLOCK", False)


def fit(cfg, splits):
    streams = SeedStreams(cfg.seed)
    model = SymmetrizationService.build_model(cfg, streams)
    f = SymmetrizationService.build_invariant(cfg, model.group, streams)
    model, history = TrainingService.train(model, splits, cfg, f, streams,
                                           workers=SymmetrizationService.default_workers())
    return model, history, f


def test_particle_method_ordering():
    test_mse = {method: [] for method in PARTICLE_METHODS}
    orbit = []
    for seed in SEEDS:
        cfg = ExperimentConfig.for_task("particle")
        cfg.seed = seed
        splits, _ = DataService.generate(cfg, SeedStreams(seed))
        for method in PARTICLE_METHODS:
            cfg.method = method
            model, history, f = fit(cfg, splits)
            result = SymmetrizationService.evaluate_split(model, splits["test"], f, SeedStreams(seed))
            test_mse[method].append(result["metric"])
            if method == "ps-orbit":
                orbit.append(history[-1]["val_orbit_loss"])

    mean = {method: float(np.mean(values)) for method, values in test_mse.items()}
    assert mean["scalar-invariant"] <= mean["ps-orbit"] <= mean["canonical-orbit"]
    assert mean["canonical-orbit"] < mean["base-aug"] < mean["base"]
    assert mean["ps-orbit"] <= 0.2 * mean["base-aug"]
    assert mean["ps-orbit"] <= 0.05 * mean["base"]
    assert max(orbit) <= 0.1


def test_rotated_digits_symmetrization():
    cfg = ExperimentConfig.for_task("rotated-digits")
    splits, _ = DataService.generate(cfg, SeedStreams(cfg.seed))
    accuracy = {}
    for method in ("ps-orbit", "base"):
        cfg.method = method
        model, _, f = fit(cfg, splits)
        for name in ("test", "test-upright"):
            result = SymmetrizationService.evaluate_split(model, splits[name], f, SeedStreams(cfg.seed))
            accuracy[(method, name)] = result["metric"]

    assert abs(accuracy[("ps-orbit", "test")] - accuracy[("ps-orbit", "test-upright")]) <= 0.02
    assert accuracy[("ps-orbit", "test")] >= accuracy[("base", "test")] + 0.10


@pytest.mark.parametrize("task", ["particle", "rotated-digits"])
def test_reruns_give_identical_metrics(task, tmp_path):
    cfg = ExperimentConfig.for_task(task)
    cfg.method = "ps-orbit"
    splits, _ = DataService.generate(cfg, SeedStreams(cfg.seed))
    for run in ("a", "b"):
        _, history, _ = fit(cfg, splits)
        CheckpointService.write_metrics(tmp_path / f"{run}.csv", history)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_orbit_loss_moving_average_falls():
    cfg = ExperimentConfig.for_task("particle")
    splits, _ = DataService.generate(cfg, SeedStreams(cfg.seed))
    _, history, _ = fit(cfg, splits)
    orbit = np.array([row["orbit_loss"] for row in history])
    average = np.convolve(orbit, np.ones(10) / 10, mode="valid")
    assert average[-1] <= average[0]
    assert average[-1] < 0.5 * average[0]


def test_orbit_loss_tracks_invariance_gap():
    cfg = ExperimentConfig.for_task("particle")
    cfg.data.n_train, cfg.data.n_val, cfg.data.n_test = 1000, 200, 200
    splits, _ = DataService.generate(cfg, SeedStreams(cfg.seed))
    orbit, gaps = [], []
    for epochs in (1, 3, 10, 30, 100):
        cfg.epochs = epochs
        model, _, f = fit(cfg, splits)
        result = SymmetrizationService.evaluate_split(model, splits["test"], f, SeedStreams(cfg.seed))
        gap = SymmetrizationService.invariance_probe(model, splits["test"], 4, SeedStreams(cfg.seed),
                                                     samples=1, shared_noise=False)
        orbit.append(result["orbit_loss"])
        gaps.append(gap["mean"])
    assert spearmanr(orbit, gaps).correlation > 0
