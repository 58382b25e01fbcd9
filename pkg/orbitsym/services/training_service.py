"""
Training Service
Minibatch Adam on the joint objective with gradient clipping, per-epoch
metrics and best-validation model selection
"""
import logging
import time

import numpy as np
from tqdm import tqdm

from orbitsym.config import Config
from orbitsym.errors import NumericFailureError
from orbitsym.models.linalg import lu_factor
from orbitsym.models.symmetrized import TrainState
from orbitsym.services.data_service import DataService
from orbitsym.services.symmetrization_service import SymmetrizationService

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "task_loss", "orbit_loss", "val_metric", "val_orbit_loss", "seconds")


class Adam:
    """Adam with bias correction; moments live in the TrainState"""

    def __init__(self, parameters, state, betas=(0.9, 0.999), eps=1e-8):
        self.parameters = parameters
        self.state = state
        self.beta1, self.beta2 = betas
        self.eps = eps
        for name, tensor in parameters:
            state.first_moment.setdefault(name, np.zeros_like(tensor.data))
            state.second_moment.setdefault(name, np.zeros_like(tensor.data))

    def zero_grad(self):
        for _, tensor in self.parameters:
            tensor.zero_grad()

    def step(self):
        self.state.step += 1
        t = self.state.step
        lr = self.state.lr
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for name, tensor in self.parameters:
            if tensor.grad is None:
                continue
            m = self.state.first_moment[name]
            v = self.state.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * tensor.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * tensor.grad * tensor.grad
            tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class TrainingService:
    """Optimizer loop for SymmetrizedModel"""

    @staticmethod
    def clip_gradients(parameters, max_norm):
        """Scale gradients to global L2 norm max_norm; returns the norm before clipping"""
        grads = [t.grad for _, t in parameters if t.grad is not None]
        total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads))) if grads else 0.0
        if max_norm and total > max_norm:
            scale = max_norm / total
            for g in grads:
                g *= scale
        return total

    @staticmethod
    def is_better(model, value, best):
        if best is None:
            return True
        return value > best if model.classification else value < best

    @staticmethod
    def train(model, splits, cfg, f, streams, progress=None, workers=1):
        """
        Train on splits["train"], select on splits["val"].
        Returns the model holding its best-validation weights and the history.
        """
        state = TrainState(lr=cfg.lr, lam=cfg.lam)
        parameters = model.parameters()
        optimizer = Adam(parameters, state)
        train = splits["train"]
        val = splits["val"]
        batch_rng = streams.generator("batches")
        noise_rng = streams.generator("noise")
        augment_rng = streams.generator("augment")
        rapidity = cfg.data.boost_rapidity
        best_weights = model.snapshot()

        logger.info("training %s on %d examples for %d epochs", model.method, len(train), cfg.epochs)
        for epoch in tqdm(range(1, cfg.epochs + 1), desc=model.method, disable=not progress):
            started = time.perf_counter()
            order = batch_rng.permutation(len(train))
            task_sum = orbit_sum = 0.0
            steps = 0
            for start in range(0, len(train), cfg.batch):
                batch = train.batch(order[start:start + cfg.batch])
                if model.method == "base-aug":
                    batch = DataService.augment(batch, model.group, augment_rng, rapidity=rapidity)
                try:
                    total, task, orbit = SymmetrizationService.joint_loss(
                        model, batch, f, cfg.lam, rng=noise_rng, norm=cfg.norm)
                except NumericFailureError as exc:
                    logger.error("numeric failure in %s at epoch %d step %d", exc.stage, epoch, steps)
                    raise NumericFailureError(exc.stage, epoch, steps) from exc

                optimizer.zero_grad()
                total.backward()
                if not all(t.grad is None or np.all(np.isfinite(t.grad)) for _, t in parameters):
                    logger.error("non-finite gradient at epoch %d step %d", epoch, steps)
                    raise NumericFailureError("gradient", epoch, steps)
                TrainingService.clip_gradients(parameters, cfg.grad_clip)
                optimizer.step()

                task_sum += float(task.data)
                orbit_sum += float(orbit.data)
                steps += 1
            TrainingService._warn_on_small_determinants(model, train, streams, epoch)

            evaluation = SymmetrizationService.evaluate_split(model, val, f, streams, norm=cfg.norm, workers=workers)
            seconds = time.perf_counter() - started if Config.WALLCLOCK else 0.0
            row = {
                "epoch": epoch,
                "task_loss": task_sum / max(steps, 1),
                "orbit_loss": orbit_sum / max(steps, 1),
                "val_metric": evaluation["metric"],
                "val_orbit_loss": evaluation["orbit_loss"],
                "seconds": seconds,
            }
            state.history.append(row)
            logger.debug("epoch %d: %s", epoch, row)
            if TrainingService.is_better(model, row["val_metric"], state.best_metric):
                state.best_metric = row["val_metric"]
                state.best_epoch = epoch
                best_weights = model.snapshot()

        model.restore(best_weights)
        state.rng_state = noise_rng.bit_generator.state
        if state.best_epoch is not None:
            logger.info("best validation metric %.6g at epoch %d", state.best_metric, state.best_epoch)
        return model, state.history

    @staticmethod
    def _warn_on_small_determinants(model, split, streams, epoch, probe=32):
        """Log a warning when some h on a small probe has |det h| below Config.DET_WARN"""
        if not model.learns_symmetrizer or len(split) == 0:
            return None
        idx = np.arange(min(probe, len(split)))
        side = None if split.side is None else split.side[idx]
        rngs = [streams.generator("det-probe", int(i)) for i in idx]
        h = SymmetrizationService.sample_frames(model, split.x[idx], 1, rngs=rngs, side=side)
        smallest = float(np.min(np.abs(lu_factor(h.data).det())))
        if smallest < Config.DET_WARN:
            logger.warning("epoch %d: symmetrizer output near singular (min |det h| = %.3e)", epoch, smallest)
        return smallest
