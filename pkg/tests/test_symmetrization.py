import numpy as np
import pytest

from orbitsym.config import Config
from orbitsym.errors import NumericFailureError
from orbitsym.extensions import SeedStreams
from orbitsym.models import ops
from orbitsym.models.networks import IdentitySymmetrizer
from orbitsym.models.records import Batch
from orbitsym.models.symmetrized import TrainState
from orbitsym.models.tensor import Tensor
from orbitsym.services.data_service import DataService
from orbitsym.services.group_service import GroupService
from orbitsym.services.invariant_service import InvariantService
from orbitsym.services.symmetrization_service import SymmetrizationService
from orbitsym.services.training_service import Adam, TrainingService


def per_example_rngs(name, count, seed=3):
    streams = SeedStreams(seed)
    return [streams.generator(name, i) for i in range(count)]


def particle_batch(count, seed=0):
    split = DataService.generate_particle_dataset(count, 1, 1, seed)["train"]
    return split.full()


def build(cfg, method=None, seed=None, output_action="invariant-scalar"):
    if method:
        cfg.method = method
    return SymmetrizationService.build_model(cfg, SeedStreams(cfg.seed if seed is None else seed),
                                             output_action=output_action)


# ================= MODEL CONSTRUCTION =================


def test_base_methods_use_identity_symmetrizer(small_particle_config):
    for method in ("base", "base-aug", "scalar-invariant"):
        model = build(small_particle_config, method)
        assert isinstance(model.symmetrizer, IdentitySymmetrizer)
        assert not model.learns_symmetrizer
    assert build(small_particle_config, "scalar-invariant").encoder == "particle-scalars"


def test_parameter_order_is_base_then_symmetrizer(small_particle_config):
    names = [name for name, _ in build(small_particle_config, "ps-orbit").parameters()]
    assert names[0] == "base.0.weight"
    assert names[-2:] == ["noise.offset", "noise.scale"]
    first_symmetrizer = names.index("symmetrizer.0.weight")
    assert all(name.startswith("base.") for name in names[:first_symmetrizer])


def test_base_weights_do_not_depend_on_method(small_particle_config):
    plain = build(small_particle_config, "base").base.weights[0].data.copy()
    symmetrized = build(small_particle_config, "ps-orbit").base.weights[0].data
    np.testing.assert_array_equal(plain, symmetrized)


def test_train_state_rejects_negative_lambda():
    with pytest.raises(ValueError):
        TrainState(lr=0.1, lam=-1.0)


# ================= FORWARD =================


def test_identity_symmetrizer_reduces_to_base(small_particle_config):
    model = build(small_particle_config, "base")
    batch = particle_batch(8)
    out = SymmetrizationService.forward_symmetrized(model, batch.x, 1, rng=np.random.default_rng(0))
    direct = model.base(Tensor(batch.x.reshape(8, 16)))
    np.testing.assert_array_equal(out.data, direct.data)


def test_samples_must_be_positive(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    with pytest.raises(ValueError):
        SymmetrizationService.forward_symmetrized(model, particle_batch(2).x, 0, rng=np.random.default_rng(0))


def test_particle_model_is_invariant(small_particle_config, rng):
    model = build(small_particle_config, "ps-orbit")
    x = particle_batch(16).x
    g = GroupService.sample_elements(model.group, rng, 16, rapidity=0.5)
    out = SymmetrizationService.forward_symmetrized(model, x, 4, rngs=per_example_rngs("phi", 16)).data
    moved = SymmetrizationService.forward_symmetrized(model, g @ x, 4, rngs=per_example_rngs("phi", 16)).data
    assert np.max(np.abs(moved - out)) / np.max(np.abs(out)) <= 1e-6


def test_canonical_particle_model_is_invariant(small_particle_config, rng):
    model = build(small_particle_config, "canonical-orbit")
    assert not model.noise.stochastic
    x = particle_batch(16).x
    g = GroupService.sample_elements(model.group, rng, 16, rapidity=0.5)
    out = SymmetrizationService.forward_symmetrized(model, x, 1, rng=np.random.default_rng(1)).data
    moved = SymmetrizationService.forward_symmetrized(model, g @ x, 1, rng=np.random.default_rng(2)).data
    assert np.max(np.abs(moved - out)) / np.max(np.abs(out)) <= 1e-6


def test_pointset_model_is_invariant(small_digits_config, rng):
    model = build(small_digits_config, "ps-orbit")
    splits, _ = DataService.generate(small_digits_config, SeedStreams(0))
    batch = splits["train"].batch(np.arange(6))
    g = GroupService.sample_element(model.group, rng)
    out = SymmetrizationService.forward_symmetrized(model, batch.x, 3, rngs=per_example_rngs("phi", 6),
                                                    side=batch.side).data
    moved, _ = SymmetrizationService.symmetrize(model, g @ batch.x, 3, rngs=per_example_rngs("phi", 6),
                                                side=batch.side, noise_transform=g)
    assert out.shape == (6, 10)
    assert np.max(np.abs(moved.data - out)) / np.max(np.abs(out)) <= 1e-6


def test_equivariant_output_path(small_particle_config, rng):
    model = build(small_particle_config, "ps-orbit", output_action="equivariant")
    x = particle_batch(8).x
    g = GroupService.sample_elements(model.group, rng, 8, rapidity=0.5)
    out = SymmetrizationService.forward_symmetrized(model, x, 2, rngs=per_example_rngs("phi", 8)).data
    moved = SymmetrizationService.forward_symmetrized(model, g @ x, 2, rngs=per_example_rngs("phi", 8)).data
    expected = np.einsum("bij,bj->bi", g, out)
    assert out.shape == (8, 4)
    assert np.max(np.abs(moved - expected)) / np.max(np.abs(expected)) <= 1e-6


def test_contraction_methods_give_exact_elements(small_particle_config):
    small_particle_config.group = "so4"
    model = build(small_particle_config, "ps-contract")
    assert model.contract
    h = SymmetrizationService.sample_frames(model, particle_batch(8).x, 2, rng=np.random.default_rng(0))
    assert all(GroupService.is_member(model.group, m, 1e-8) for m in h.data)


def test_doubling_samples_stays_within_monte_carlo_error(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    x = particle_batch(16).x
    phi16 = SymmetrizationService.forward_symmetrized(model, x, 16, rngs=per_example_rngs("mc", 16)).data[:, 0]
    phi32 = SymmetrizationService.forward_symmetrized(model, x, 32, rngs=per_example_rngs("mc", 16)).data[:, 0]
    single = SymmetrizationService.forward_symmetrized(
        model, np.repeat(x, 32, axis=0), 1, rngs=per_example_rngs("spread", 16 * 32)).data.reshape(16, 32)
    standard_error = single.std(axis=1) / np.sqrt(16)
    assert np.all(np.abs(phi32 - phi16) <= 6.0 * standard_error + 1e-12)


def test_non_finite_input_names_stage(small_particle_config):
    model = build(small_particle_config, "base")
    x = particle_batch(2).x
    x[0, 0, 0] = np.nan
    with pytest.raises(NumericFailureError) as info:
        SymmetrizationService.forward_symmetrized(model, x, 1, rng=np.random.default_rng(0))
    assert info.value.stage == "inverse"


# ================= OBJECTIVE =================


def test_lambda_zero_gives_task_loss(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    f = InvariantService.for_group(model.group)
    total, task, orbit = SymmetrizationService.joint_loss(model, particle_batch(8), f, 0.0,
                                                           rng=np.random.default_rng(0))
    assert total.item() == task.item()
    assert orbit.item() > 0.0


def test_joint_loss_combines_terms(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    f = InvariantService.for_group(model.group)
    total, task, orbit = SymmetrizationService.joint_loss(model, particle_batch(8), f, 2.0,
                                                           rng=np.random.default_rng(0))
    assert total.item() == pytest.approx(task.item() + 2.0 * orbit.item())


def test_gradient_reaches_base_and_symmetrizer(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    f = InvariantService.for_group(model.group)
    total, _, _ = SymmetrizationService.joint_loss(model, particle_batch(8), f, 1.0, rng=np.random.default_rng(0))
    total.backward()
    grads = {name: t.grad for name, t in model.parameters()}
    assert np.any(grads["base.0.weight"])
    assert np.any(grads["symmetrizer.0.weight"])
    assert np.any(grads["noise.offset"])


def test_exact_frames_give_zero_orbit_term(small_particle_config):
    small_particle_config.group = "so4"
    model = build(small_particle_config, "ps-contract")
    f = InvariantService.for_group(model.group)
    total, task, orbit = SymmetrizationService.joint_loss(model, particle_batch(8), f, 1.0,
                                                           rng=np.random.default_rng(0))
    assert orbit.item() <= 1e-9
    assert total.item() == task.item()


def test_base_joint_loss_is_plain_mse(small_particle_config):
    model = build(small_particle_config, "base")
    batch = particle_batch(8)
    total, task, orbit = SymmetrizationService.joint_loss(model, batch, None, 1.0, rng=np.random.default_rng(0))
    direct = ops.mse(model.base(Tensor(batch.x.reshape(8, 16))).reshape((8,)), Tensor(batch.labels))
    assert total.item() == direct.item()
    assert orbit.item() == 0.0


def test_empty_batch_rejected(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    empty = Batch(x=np.zeros((0, 4, 4)), labels=np.zeros(0))
    with pytest.raises(ValueError):
        SymmetrizationService.joint_loss(model, empty, None, 1.0)


# ================= OPTIMIZER =================


def test_adam_first_step_moves_by_learning_rate():
    w = Tensor.parameter([1.0, -1.0], name="w")
    state = TrainState(lr=0.1, lam=0.0)
    optimizer = Adam([("w", w)], state)
    ops.sum(ops.mul(w, w)).backward()
    optimizer.step()
    np.testing.assert_allclose(w.data, [0.9, -0.9], atol=1e-6)
    assert state.step == 1


def test_gradient_clipping():
    w = Tensor.parameter([0.0, 0.0])
    w.grad = np.array([30.0, 40.0])
    norm = TrainingService.clip_gradients([("w", w)], 10.0)
    assert norm == pytest.approx(50.0)
    np.testing.assert_allclose(w.grad, [6.0, 8.0])


# ================= TRAINING =================


def train_once(cfg, method="ps-orbit"):
    cfg.method = method
    streams = SeedStreams(cfg.seed)
    splits, _ = DataService.generate(cfg, streams)
    model = SymmetrizationService.build_model(cfg, streams)
    f = SymmetrizationService.build_invariant(cfg, model.group, streams)
    return TrainingService.train(model, splits, cfg, f, streams)


def test_zero_epochs_keeps_initial_weights(small_particle_config):
    small_particle_config.epochs = 0
    initial = build(small_particle_config, "ps-orbit").snapshot()
    model, history = train_once(small_particle_config)
    assert history == []
    for before, after in zip(initial, model.snapshot()):
        np.testing.assert_array_equal(before, after)


def test_training_is_deterministic(small_particle_config, monkeypatch):
    monkeypatch.setattr(Config, "WALLCLOCK", False)
    _, first = train_once(small_particle_config)
    _, second = train_once(small_particle_config)
    assert len(first) == small_particle_config.epochs
    assert first == second
    assert all(row["seconds"] == 0.0 for row in first)


@pytest.mark.parametrize("method", ["base", "base-aug", "scalar-invariant", "canonical-orbit", "ps-orbit"])
def test_every_method_trains(small_particle_config, method):
    model, history = train_once(small_particle_config, method)
    assert len(history) == small_particle_config.epochs
    assert all(np.isfinite(row["task_loss"]) and np.isfinite(row["val_metric"]) for row in history)
    if not model.learns_symmetrizer:
        assert all(row["orbit_loss"] == 0.0 for row in history)


def plain_mlp_training(cfg, splits, streams):
    """Adam on the bare base MLP with the trainer's batch order and validation selection"""
    base = SymmetrizationService.build_model(cfg, streams).base
    parameters = base.parameters()
    optimizer = Adam(parameters, TrainState(lr=cfg.lr, lam=cfg.lam))
    batch_rng = streams.generator("batches")
    train, val = splits["train"], splits["val"]
    best, best_weights, val_metrics = None, [t.data.copy() for _, t in parameters], []
    for _ in range(cfg.epochs):
        order = batch_rng.permutation(len(train))
        for start in range(0, len(train), cfg.batch):
            batch = train.batch(order[start:start + cfg.batch])
            out = base(Tensor(batch.x.reshape(len(batch), -1)))
            loss = ops.mse(out.reshape((len(batch),)), Tensor(batch.labels))
            optimizer.zero_grad()
            loss.backward()
            TrainingService.clip_gradients(parameters, cfg.grad_clip)
            optimizer.step()
        outputs = base(Tensor(val.x.reshape(len(val), -1))).data
        metric = float(np.mean((outputs.reshape(-1) - val.labels) ** 2))
        val_metrics.append(metric)
        if best is None or metric < best:
            best, best_weights = metric, [t.data.copy() for _, t in parameters]
    for (_, tensor), value in zip(parameters, best_weights):
        tensor.data[...] = value
    return [t.data for _, t in parameters], val_metrics


def test_identity_symmetrizer_training_matches_plain_mlp(small_particle_config):
    cfg = small_particle_config
    cfg.epochs = 3
    cfg.samples_eval = 1
    cfg.method = "base"
    splits, _ = DataService.generate(cfg, SeedStreams(cfg.seed))

    model = SymmetrizationService.build_model(cfg, SeedStreams(cfg.seed))
    f = SymmetrizationService.build_invariant(cfg, model.group, SeedStreams(cfg.seed))
    model, history = TrainingService.train(model, splits, cfg, f, SeedStreams(cfg.seed))
    weights, val_metrics = plain_mlp_training(cfg, splits, SeedStreams(cfg.seed))

    assert [row["val_metric"] for row in history] == val_metrics
    for (_, tensor), expected in zip(model.parameters(), weights):
        assert np.array_equal(tensor.data, expected)


def test_digits_training_reports_accuracy(small_digits_config):
    model, history = train_once(small_digits_config)
    assert model.classification
    assert 0.0 <= history[-1]["val_metric"] <= 1.0


# ================= EVALUATION =================


def test_evaluation_is_independent_of_worker_count(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    split = DataService.generate_particle_dataset(300, 1, 1, seed=4)["train"]
    f = InvariantService.for_group(model.group)
    streams = SeedStreams(9)
    serial = SymmetrizationService.evaluate_split(model, split, f, streams, samples=2, workers=1)
    parallel = SymmetrizationService.evaluate_split(model, split, f, streams, samples=2, workers=4)
    np.testing.assert_array_equal(serial["outputs"], parallel["outputs"])
    assert serial["metric"] == parallel["metric"]
    assert serial["orbit_loss"] == parallel["orbit_loss"]


def test_invariance_probe(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    split = DataService.generate_particle_dataset(20, 1, 1, seed=4)["train"]
    assert SymmetrizationService.invariance_probe(model, split, 0, SeedStreams(1))["transforms"] == 0
    probe = SymmetrizationService.invariance_probe(model, split, 3, SeedStreams(1), samples=2, rapidity=0.5)
    assert probe["transforms"] == 3
    assert probe["max"] <= 1e-8
    assert probe["mean"] <= probe["max"]


def test_independent_noise_gap_shows_sampling_spread(small_particle_config):
    model = build(small_particle_config, "ps-orbit")
    split = DataService.generate_particle_dataset(20, 1, 1, seed=4)["train"]
    shared = SymmetrizationService.invariance_probe(model, split, 2, SeedStreams(1), samples=1)
    fresh = SymmetrizationService.invariance_probe(model, split, 2, SeedStreams(1), samples=1,
                                                   shared_noise=False)
    again = SymmetrizationService.invariance_probe(model, split, 2, SeedStreams(1), samples=1,
                                                   shared_noise=False)
    assert fresh == again
    assert fresh["mean"] > shared["mean"]
    assert fresh["mean"] > 1e-6


def test_base_model_is_not_invariant(small_particle_config):
    model = build(small_particle_config, "base")
    split = DataService.generate_particle_dataset(20, 1, 1, seed=4)["train"]
    probe = SymmetrizationService.invariance_probe(model, split, 3, SeedStreams(1), samples=1)
    assert probe["max"] > 1e-6
