"""
Equivariant Service
Building and running the scalars-based symmetrizer, the noise featurization
z = (x^T L)^-1 eps, point-set preprocessing and the Gram-Schmidt contraction
"""
import logging

import numpy as np

from orbitsym.config import Config
from orbitsym.errors import DimensionError, UsageError
from orbitsym.models import ops
from orbitsym.models.linalg import condition_estimate, lu_factor
from orbitsym.models.networks import QUARTER_TURN, NoiseSpec, ScalarEquivariantNet
from orbitsym.models.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

GRID_SIZE = 28
GRID_EXTENT = 14.0
RIDGE_SCALE = 1e-6


def pixel_coordinates(size=GRID_SIZE, extent=GRID_EXTENT):
    """(x, y) of every pixel in row-major order; y grows upwards"""
    lin = np.linspace(-extent, extent, size)
    ys, xs = np.meshgrid(lin[::-1], lin, indexing="ij")
    return np.stack([xs.reshape(-1), ys.reshape(-1)])


class EquivariantService:
    """Operations on ScalarEquivariantNet values"""

    @staticmethod
    def build_symmetrizer(group, data_cols, sym_cfg, rng, side_dim=0, canonical=False):
        """
        Symmetrizer for inputs with data_cols columns.
        Square inputs featurize trivially-acting noise; wider inputs use noise
        that transforms with the group.
        """
        action = "trivial" if data_cols == group.n else "standard"
        distribution = "deterministic" if canonical else sym_cfg.noise
        if action == "standard" and distribution == "uniform-trainable":
            raise UsageError("uniform-trainable noise needs square inputs for featurization")
        noise = NoiseSpec.build(group.n, sym_cfg.d_eps, distribution, action, rng=rng)
        scalars = sym_cfg.scalars if action == "trivial" else "anchored"
        return ScalarEquivariantNet(
            group, data_cols, noise, rng,
            hidden=sym_cfg.hidden,
            depth=sym_cfg.depth,
            combine=sym_cfg.combine if scalars == "gram" else "concat",
            scalars=scalars,
            orientation=sym_cfg.orientation and group.n == 2,
            side_dim=side_dim,
        )

    # ================= NOISE =================

    @staticmethod
    def featurize_noise(x, eps, metric, ceiling=None):
        """
        z = (x^T L)^-1 eps for square x, so that x^T L z = eps.
        Matrices past the condition ceiling get a ridge x + delta*I with
        delta = 1e-6 * ||x||_F before inversion.
        """
        ceiling = Config.COND_CEILING if ceiling is None else ceiling
        x = as_tensor(x)
        eps = as_tensor(eps)
        n = x.shape[-1]
        if x.shape[-2] != n:
            raise DimensionError(f"featurization needs square inputs, got shape {x.shape}")
        lam = Tensor(np.asarray(metric, dtype=np.float64))

        flat = x.data.reshape(-1, n, n)
        system = np.swapaxes(flat, -1, -2) @ lam.data
        fact = lu_factor(system)
        cond = condition_estimate(system, fact.inverse())
        bad = fact.singular | (cond > ceiling)
        if np.any(bad):
            delta = RIDGE_SCALE * np.linalg.norm(flat, axis=(-2, -1))
            jitter = np.where(bad, delta, 0.0)[:, None, None] * np.eye(n)
            logger.warning("featurization: %d ill-conditioned input(s), applying ridge jitter", int(np.sum(bad)))
            x = ops.add(x, Tensor(jitter.reshape(x.shape)))

        return ops.matmul(ops.inverse(ops.matmul(ops.transpose(x), lam), ceiling=ceiling), eps)

    @staticmethod
    def noise_columns(net, x, eps):
        """Equivariant columns contributed by eps; None when the net uses no noise"""
        if eps is None or net.noise.d_eps == 0:
            return None
        if net.noise.action == "trivial":
            return EquivariantService.featurize_noise(x, eps, net.group.bilinear_form)
        return as_tensor(eps)

    # ================= FORWARD =================

    @staticmethod
    def forward(net, x, eps, side=None):
        """
        h = q(x, eps) for a batch x of shape (B, n, c).
        eps has shape (B, n, d_eps) or is None; side holds invariant features,
        (B, side_dim) in gram mode and (B, c) per-column values in anchored mode.
        """
        x = as_tensor(x)
        if x.ndim == 2:
            x = x.reshape((1,) + x.shape)
        if x.shape[-2] != net.group.n or x.shape[-1] != net.data_cols:
            raise DimensionError(f"symmetrizer expects ({net.group.n}, {net.data_cols}) inputs, got {x.shape[1:]}")
        z = EquivariantService.noise_columns(net, x, eps)
        if net.scalars == "gram":
            return EquivariantService._forward_gram(net, x, z, side)
        return EquivariantService._forward_anchored(net, x, z, side)

    @staticmethod
    def stack_columns(net, x, z):
        if z is None:
            return x
        if net.combine == "add":
            return ops.add(x, z)
        return ops.concat([x, z], axis=-1)

    @staticmethod
    def gram_scalars(net, u):
        """Flattened U^T L U, followed by the signed areas U^T J U with orientation channels"""
        count, m = u.shape[0], u.shape[-1]
        lam = Tensor(net.group.bilinear_form)
        ut = ops.transpose(u)
        scalars = [ops.matmul(ops.matmul(ut, lam), u).reshape((count, m * m))]
        if net.orientation:
            scalars.append(ops.matmul(ops.matmul(ut, Tensor(QUARTER_TURN)), u).reshape((count, m * m)))
        return scalars[0] if len(scalars) == 1 else ops.concat(scalars, axis=1)

    @staticmethod
    def _forward_gram(net, x, z, side):
        u = EquivariantService.stack_columns(net, x, z)
        count, n, m = u.shape
        if u.shape[-1] != net.m:
            raise DimensionError(f"symmetrizer expects {net.m} stacked columns, got {u.shape[-1]}")
        features = EquivariantService.gram_scalars(net, u)
        if net.side_dim:
            features = ops.concat([features, as_tensor(side).reshape((count, net.side_dim))], axis=1)
        coeffs = net.mlp(features)

        h = ops.matmul(u, ops.getitem(coeffs, (slice(None), slice(0, m * n))).reshape((count, m, n)))
        if net.orientation:
            turned = ops.matmul(Tensor(QUARTER_TURN), u)
            extra = ops.getitem(coeffs, (slice(None), slice(m * n, 2 * m * n))).reshape((count, m, n))
            h = ops.add(h, ops.matmul(turned, extra))
        return h

    @staticmethod
    def _forward_anchored(net, x, z, side):
        count, n, cols = x.shape
        lam = Tensor(net.group.bilinear_form)

        # value-weighted centroid as the first anchor
        weights = Tensor(np.ones((count, cols))) if side is None else as_tensor(side).reshape((count, cols))
        total = ops.add(ops.sum(weights, axis=1).reshape((count, 1, 1)), 1e-12)
        centroid = ops.div(ops.matmul(x, weights.reshape((count, cols, 1))), total)
        anchors = centroid if z is None else ops.concat([centroid, z], axis=-1)
        k = anchors.shape[-1]

        u = ops.concat([x, anchors], axis=-1)
        total_cols = cols + k
        ut = ops.transpose(u)
        lam_anchors = ops.matmul(lam, anchors)
        projections = ops.matmul(ut, lam_anchors)
        sq_norms = ops.sum(ops.mul(u, ops.matmul(lam, u)), axis=-2).reshape((count, total_cols, 1))
        anchor_gram = ops.matmul(ops.transpose(anchors), lam_anchors).reshape((count, 1, k * k))
        ones = Tensor(np.ones((1, total_cols, 1)))

        side_col = np.zeros((count, total_cols, 1))
        if side is not None:
            side_col[:, :cols, 0] = as_tensor(side).data.reshape(count, cols)
        indicator = np.zeros((count, total_cols, 1))
        indicator[:, cols:, 0] = 1.0

        parts = [projections, sq_norms, Tensor(side_col), Tensor(indicator), ops.mul(anchor_gram, ones)]
        if net.orientation:
            turn = Tensor(QUARTER_TURN)
            turned_anchors = ops.matmul(turn, anchors)
            parts.append(ops.matmul(ut, turned_anchors))
            areas = ops.matmul(ops.transpose(anchors), turned_anchors).reshape((count, 1, k * k))
            parts.append(ops.mul(areas, ones))
        if net.side_dim != 1:
            parts.pop(2)
        coeffs = net.mlp(ops.concat(parts, axis=-1))

        scale = 1.0 / total_cols
        h = ops.matmul(u, ops.getitem(coeffs, (slice(None), slice(None), slice(0, n))))
        if net.orientation:
            extra = ops.getitem(coeffs, (slice(None), slice(None), slice(n, 2 * n)))
            h = ops.add(h, ops.matmul(ops.matmul(Tensor(QUARTER_TURN), u), extra))
        return ops.scalar_mul(h, scale)

    # ================= CONTRACTION =================

    @staticmethod
    def contract(h, spec):
        """
        Gram-Schmidt on the columns of h, giving an exact orthogonal matrix.
        For SO(n) the last column is flipped where needed so det = +1.
        """
        h = as_tensor(h)
        squeeze = h.ndim == 2
        if squeeze:
            h = h.reshape((1,) + h.shape)
        count, n = h.shape[0], spec.n
        basis = []
        for j in range(n):
            v = ops.getitem(h, (slice(None), slice(None), slice(j, j + 1)))
            for q in basis:
                v = ops.sub(v, ops.mul(q, ops.sum(ops.mul(q, v), axis=-2, keepdims=True)))
            norm = ops.l2_norm(v, axis=-2).reshape((count, 1, 1))
            basis.append(ops.div(v, norm))
        q = ops.concat(basis, axis=-1)
        if spec.family == "SO":
            signs = np.ones((count, 1, n))
            signs[:, 0, -1] = np.where(lu_factor(q.data).det() < 0, -1.0, 1.0)
            q = ops.mul(q, Tensor(signs))
        return q.reshape((n, n)) if squeeze else q

    # ================= POINT SETS =================

    @staticmethod
    def preprocess_pointset(image, t=0.2, m=200):
        """
        Brightest m pixels of a 28x28 image as (values (1, m), coords (2, m)).
        Pixels below t are zeroed; short sets are padded with zero columns.
        """
        image = np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)
        if image.shape != (GRID_SIZE, GRID_SIZE):
            raise DimensionError(f"expected a {GRID_SIZE}x{GRID_SIZE} image, got shape {image.shape}")
        values = image.reshape(-1)
        coords = pixel_coordinates()
        order = np.argsort(-values, kind="stable")[:m]
        kept_values = values[order]
        kept_coords = coords[:, order]
        mask = kept_values >= t
        out_values = np.zeros((1, m))
        out_coords = np.zeros((2, m))
        count = len(order)
        out_values[0, :count] = np.where(mask, kept_values, 0.0)
        out_coords[:, :count] = np.where(mask, kept_coords, 0.0)
        return Tensor(out_values), Tensor(out_coords)
