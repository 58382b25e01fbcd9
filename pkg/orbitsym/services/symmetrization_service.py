"""
Symmetrization Service
Model construction, the symmetrized forward pass, the joint task + orbit
objective, split evaluation and the invariance probe
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from orbitsym.config import Config
from orbitsym.errors import NumericFailureError, UsageError
from orbitsym.models import ops
from orbitsym.models.networks import IdentitySymmetrizer, Mlp
from orbitsym.models.symmetrized import SymmetrizedModel
from orbitsym.models.tensor import Tensor
from orbitsym.services.equivariant_service import EquivariantService
from orbitsym.services.group_service import GroupService
from orbitsym.services.invariant_service import InvariantService

logger = logging.getLogger(__name__)

NUM_CLASSES = 10
EVAL_CHUNK = 128

# method -> (symmetrizer kind, contraction, invariant-feature base)
METHOD_TABLE = {
    "base": (None, False, False),
    "base-aug": (None, False, False),
    "scalar-invariant": (None, False, True),
    "canonical-orbit": ("canonical", False, False),
    "ps-orbit": ("stochastic", False, False),
    "canonical-contract": ("canonical", True, False),
    "ps-contract": ("stochastic", True, False),
}


class SymmetrizationService:
    """Operations on SymmetrizedModel values"""

    @staticmethod
    def data_shape(cfg, group):
        """(rows, columns) of one example's equivariant channel"""
        if cfg.task == "particle":
            return group.n, group.n
        return group.n, cfg.data.points

    @staticmethod
    def build_model(cfg, streams, output_action="invariant-scalar"):
        """Fresh model for an ExperimentConfig; base weights are drawn before symmetrizer weights"""
        group = GroupService.parse(cfg.group)
        kind, contract, invariant_base = METHOD_TABLE[cfg.method]
        rows, cols = SymmetrizationService.data_shape(cfg, group)
        pointset = cfg.task == "rotated-digits"

        if invariant_base:
            encoder = "pointset-scalars" if pointset else "particle-scalars"
            in_dim = 2 * cols if pointset else cols * cols
        else:
            encoder = "pointset" if pointset else "matrix"
            in_dim = 3 * cols if pointset else rows * cols
        if output_action == "equivariant":
            out_dim = group.n
        else:
            out_dim = NUM_CLASSES if pointset else 1

        rng = streams.generator("init")
        base = Mlp(in_dim, cfg.base_hidden, out_dim, cfg.base_depth, rng, activation="silu", name="base")
        if kind is None:
            symmetrizer = IdentitySymmetrizer(group, cols)
        else:
            symmetrizer = EquivariantService.build_symmetrizer(
                group, cols, cfg.symmetrizer, rng,
                side_dim=1 if pointset else 0,
                canonical=kind == "canonical",
            )
        if contract and not group.is_orthogonal:
            raise UsageError(f"contraction needs an orthogonal group, got {group.name}")

        return SymmetrizedModel(
            base=base,
            symmetrizer=symmetrizer,
            group=group,
            task=cfg.task,
            method=cfg.method,
            encoder=encoder,
            samples_train=cfg.samples_train,
            samples_eval=cfg.samples_eval,
            output_action=output_action,
            contract=contract,
        )

    @staticmethod
    def build_invariant(cfg, group, streams):
        """Separating invariant for the orbit loss, projected when cfg.invariant.project is set"""
        f = InvariantService.for_group(group, witness_seed=streams.seed("witnesses"))
        if cfg.invariant.project:
            f = InvariantService.project(f, cfg.invariant.projection_seed)
            logger.info("orbit loss uses a %d-component projected invariant", f.k)
        return f

    # ================= FORWARD =================

    @staticmethod
    def _check_finite(tensor, stage):
        if not np.all(np.isfinite(tensor.data)):
            raise NumericFailureError(stage)
        return tensor

    @staticmethod
    def draw_noise(model, count, samples, rng=None, rngs=None):
        """Raw noise for count examples x samples draws; per-example generators take precedence"""
        noise = model.noise
        if rngs is not None:
            draws = [noise.draw_base(r, samples) for r in rngs]
            return np.concatenate(draws) if draws else np.zeros((0, noise.n, noise.d_eps))
        return noise.draw_base(rng, count * samples)

    @staticmethod
    def sample_frames(model, x, samples, rng=None, rngs=None, side=None, noise_transform=None):
        """h of shape (B * samples, n, n), example-major"""
        count = x.shape[0]
        n = model.group.n
        if isinstance(model.symmetrizer, IdentitySymmetrizer):
            return Tensor(np.broadcast_to(np.eye(n), (count * samples, n, n)).copy())

        base = SymmetrizationService.draw_noise(model, count, samples, rng=rng, rngs=rngs)
        if noise_transform is not None and model.noise.action == "standard":
            base = noise_transform @ base
        eps = model.noise.realize(base)
        x_rep = np.repeat(x, samples, axis=0)
        side_rep = None if side is None else np.repeat(side, samples, axis=0)
        h = EquivariantService.forward(model.symmetrizer, Tensor(x_rep), eps, side=side_rep)
        SymmetrizationService._check_finite(h, "symmetrizer")
        if model.contract:
            h = SymmetrizationService._check_finite(EquivariantService.contract(h, model.group), "contraction")
        return h

    @staticmethod
    def encode(model, xt, side):
        """Input of the base model for transformed examples xt"""
        count = xt.shape[0]
        if model.encoder == "matrix":
            return xt.reshape((count, -1))
        if model.encoder == "pointset":
            return ops.concat([Tensor(side), xt.reshape((count, -1))], axis=1)
        if model.encoder == "particle-scalars":
            lam = Tensor(model.group.bilinear_form)
            return ops.matmul(ops.transpose(xt), ops.matmul(lam, xt)).reshape((count, -1))
        if model.encoder == "pointset-scalars":
            return ops.concat([Tensor(side), ops.sum(ops.mul(xt, xt), axis=-2)], axis=1)
        raise UsageError(f"unknown encoder: {model.encoder}")

    @staticmethod
    def symmetrize(model, x, samples, rng=None, rngs=None, side=None, noise_transform=None):
        """Phi(x) of shape (B, out) together with every drawn h"""
        if samples < 1:
            raise ValueError("samples must be at least 1")
        x = np.asarray(x, dtype=np.float64)
        count = x.shape[0]
        h = SymmetrizationService.sample_frames(model, x, samples, rng=rng, rngs=rngs, side=side,
                                                noise_transform=noise_transform)
        x_rep = Tensor(np.repeat(x, samples, axis=0))
        side_rep = None if side is None else np.repeat(side, samples, axis=0)

        xt = GroupService.act(model.group, GroupService.approx_inverse(model.group, h), x_rep)
        SymmetrizationService._check_finite(xt, "inverse")
        out = model.base(SymmetrizationService.encode(model, xt, side_rep))
        SymmetrizationService._check_finite(out, "base")
        if model.output_action == "equivariant":
            out = ops.matmul(h, out.reshape((count * samples, model.group.n, 1))).reshape((count * samples, -1))
        out = ops.mean(out.reshape((count, samples, -1)), axis=1)
        return out, h

    @staticmethod
    def forward_symmetrized(model, x, samples, rng=None, rngs=None, side=None):
        """Phi(x) = mean_i rho_Y(h_i) phi(approx_inverse(h_i) x)"""
        out, _ = SymmetrizationService.symmetrize(model, x, samples, rng=rng, rngs=rngs, side=side)
        return out

    # ================= OBJECTIVE =================

    @staticmethod
    def task_loss(model, out, labels):
        if model.classification:
            return ops.cross_entropy(out, labels)
        return ops.mse(out.reshape((len(labels),)), Tensor(labels))

    @staticmethod
    def joint_loss(model, batch, f, lam, rng=None, norm="l1", samples=None, rngs=None):
        """
        (total, task, orbit) with total = task + lam * mean orbit loss over all drawn h.
        Contraction methods and lam = 0 train on the task term alone.
        """
        if len(batch) == 0:
            raise ValueError("joint_loss needs a nonempty batch")
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        samples = model.samples_train if samples is None else samples
        out, h = SymmetrizationService.symmetrize(model, batch.x, samples, rng=rng, rngs=rngs, side=batch.side)
        task = SymmetrizationService.task_loss(model, out, batch.labels)
        SymmetrizationService._check_finite(task, "task-loss")

        if not model.learns_symmetrizer:
            return task, task, Tensor(0.0)
        orbit = ops.mean(InvariantService.orbit_loss(f, h, norm))
        SymmetrizationService._check_finite(orbit, "orbit-loss")
        if lam == 0 or model.contract:
            return task, task, orbit
        return ops.add(task, ops.scalar_mul(orbit, lam)), task, orbit

    # ================= EVALUATION =================

    @staticmethod
    def metric(model, outputs, labels):
        """MSE for regression, accuracy for classification"""
        if model.classification:
            return float(np.mean(np.argmax(outputs, axis=1) == labels))
        return float(np.mean((outputs.reshape(-1) - labels) ** 2))

    @staticmethod
    def _evaluate_chunk(model, split, f, streams, stream, samples, norm, idx):
        rngs = [streams.generator(stream, int(i)) for i in idx]
        side = None if split.side is None else split.side[idx]
        out, h = SymmetrizationService.symmetrize(model, split.x[idx], samples, rngs=rngs, side=side)
        orbit = InvariantService.orbit_loss(f, h, norm).data if model.learns_symmetrizer else np.zeros(len(h.data))
        return out.data, orbit

    @staticmethod
    def evaluate_split(model, split, f, streams, samples=None, norm="l1", workers=1, stream="eval-noise"):
        """
        Metric, task loss and mean orbit loss over a split.
        Example i always draws its noise from stream (stream, i), so any
        worker count gives the same numbers.
        """
        samples = model.samples_eval if samples is None else samples
        chunks = [np.arange(s, min(s + EVAL_CHUNK, len(split))) for s in range(0, len(split), EVAL_CHUNK)]

        def run(idx):
            return SymmetrizationService._evaluate_chunk(model, split, f, streams, stream, samples, norm, idx)

        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, chunks))
        else:
            results = [run(idx) for idx in chunks]

        outputs = np.concatenate([r[0] for r in results])
        orbit = np.concatenate([r[1] for r in results])
        if model.classification:
            task = float(ops.cross_entropy(Tensor(outputs), split.labels).data)
        else:
            task = SymmetrizationService.metric(model, outputs, split.labels)
        return {
            "metric": SymmetrizationService.metric(model, outputs, split.labels),
            "task_loss": task,
            "orbit_loss": float(np.mean(orbit)),
            "outputs": outputs,
        }

    @staticmethod
    def invariance_probe(model, split, transforms, streams, samples=None, probe_size=64, rapidity=None,
                         shared_noise=True):
        """
        max and mean of |Phi(g x) - Phi(x)| over fresh group elements g.
        With shared_noise each example reuses its noise draws for x and g x;
        noise that carries the standard action is transformed along with x.
        Otherwise g x gets independent draws and the gap includes the
        sampling spread of the symmetrizer.
        """
        samples = model.samples_eval if samples is None else samples
        if transforms <= 0 or len(split) == 0:
            return {"transforms": 0, "max": 0.0, "mean": 0.0, "relative_mean": 0.0}
        idx = np.arange(min(probe_size, len(split)))
        x = split.x[idx]
        side = None if split.side is None else split.side[idx]

        def phi(data, g=None, stream="probe-noise"):
            rngs = [streams.generator(stream, int(i)) for i in idx]
            out, _ = SymmetrizationService.symmetrize(model, data, samples, rngs=rngs, side=side, noise_transform=g)
            return out.data

        reference = phi(x)
        defects = []
        for t in range(transforms):
            g = GroupService.sample_element(model.group, streams.generator("transforms", t), rapidity=rapidity)
            if shared_noise:
                moved = phi(g @ x, g)
            else:
                moved = phi(g @ x, stream=f"resampled-noise-{t}")
            if model.output_action == "equivariant":
                reference_moved = reference @ g.T
            else:
                reference_moved = reference
            defects.append(np.max(np.abs(moved - reference_moved), axis=1))
        defects = np.concatenate(defects)
        scale = float(np.mean(np.abs(reference))) or 1.0
        return {
            "transforms": int(transforms),
            "max": float(np.max(defects)),
            "mean": float(np.mean(defects)),
            "relative_mean": float(np.mean(defects)) / scale,
        }

    @staticmethod
    def default_workers():
        return max(1, Config.WORKERS)
