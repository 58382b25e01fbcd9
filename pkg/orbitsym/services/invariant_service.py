"""
Invariant Service
Orbit-separating invariants, their random projection, the orbit-space
distance and the orbit-distance loss ||f(h) - f(I)||
"""
import itertools
import logging

import numpy as np

from orbitsym.errors import DimensionError, DomainError
from orbitsym.models import ops
from orbitsym.models.invariant import KINDS, SeparatingInvariant, reduced_dimension
from orbitsym.models.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

GL_DOMAIN_FLOOR = 1e-12


def power_sum_exponents(n):
    """Multi-indices alpha in Z^n_{>=0} with |alpha| <= n, lexicographic"""
    rows = [alpha for alpha in itertools.product(range(n + 1), repeat=n) if sum(alpha) <= n]
    return np.array(rows, dtype=np.float64)


class InvariantService:
    """Build and evaluate SeparatingInvariant values"""

    @staticmethod
    def for_group(spec, witness_seed=0):
        """The separating invariant listed for the group's family"""
        n = spec.n
        kind = KINDS[spec.family]
        exponents = witnesses = None
        if kind == "gram" or kind == "metric-gram":
            k = n * n
        elif kind == "gram-det":
            k = n * n + 1
        elif kind == "det-only":
            k = 1
        elif kind == "power-sums":
            exponents = power_sum_exponents(n)
            k = len(exponents)
        else:
            k = reduced_dimension(n)
            witnesses = np.random.default_rng(witness_seed).standard_normal((k, n, n))

        domain = "full-rank-only" if spec.full_rank_only else "all"
        f = SeparatingInvariant(group=spec, kind=kind, k=k, separation_domain=domain,
                                exponents=exponents, witnesses=witnesses)
        return f.with_changes(identity_value=InvariantService._identity_value(f))

    @staticmethod
    def _identity_value(f):
        return InvariantService.evaluate(f, Tensor(np.eye(f.group.n))).data.copy()

    @staticmethod
    def project(f, seed):
        """
        Random linear reduction to 2n^2 + 1 components with iid standard
        normal coefficients. Invariants already that small come back unchanged.
        """
        target = reduced_dimension(f.group.n)
        if f.projection is not None or f.k <= target:
            return f
        weights = np.random.default_rng(seed).standard_normal((target, f.k))
        projected = f.with_changes(k=target, projection=weights, projection_seed=int(seed), identity_value=None)
        return projected.with_changes(identity_value=InvariantService._identity_value(projected))

    # ================= EVALUATION =================

    @staticmethod
    def evaluate(f, h):
        """f(h) for h of shape (n, n) or (..., n, n); output (..., k)"""
        h = as_tensor(h)
        n = f.group.n
        if h.ndim < 2 or h.shape[-2:] != (n, n):
            raise DimensionError(f"{f.kind} invariant expects {n}x{n} matrices, got shape {h.shape}")
        batch_shape = h.shape[:-2]
        flat = h.reshape((-1, n, n))
        values = InvariantService._raw(f, flat)
        if f.projection is not None:
            values = ops.matmul(values, Tensor(f.projection.T))
        return values.reshape(batch_shape + (f.k,))

    @staticmethod
    def _raw(f, h):
        count, n = h.shape[0], f.group.n
        if f.kind == "gram":
            return ops.matmul(ops.transpose(h), h).reshape((count, n * n))
        if f.kind == "metric-gram":
            lam = Tensor(f.group.metric)
            return ops.matmul(ops.matmul(ops.transpose(h), lam), h).reshape((count, n * n))
        if f.kind == "gram-det":
            gram = ops.matmul(ops.transpose(h), h).reshape((count, n * n))
            det = ops.determinant(h).reshape((count, 1))
            return ops.concat([gram, det], axis=1)
        if f.kind == "det-only":
            return ops.determinant(h).reshape((count, 1))
        if f.kind == "power-sums":
            exponents = f.exponents.reshape((1, len(f.exponents), 1, n))
            monomials = ops.prod(ops.power(h.reshape((count, 1, n, n)), exponents), axis=-1)
            return ops.sum(monomials, axis=-1)
        if f.kind == "gl-rational":
            gram_det = ops.determinant(ops.matmul(h, ops.transpose(h)))
            if np.any(gram_det.data < GL_DOMAIN_FLOOR):
                raise DomainError(
                    f"det(h h^T) = {float(np.min(gram_det.data)):.3e} is below {GL_DOMAIN_FLOOR:g}; "
                    "input lies outside the separation domain"
                )
            dets = ops.determinant(ops.matmul(h.reshape((count, 1, n, n)), Tensor(f.witnesses)))
            return ops.div(ops.mul(dets, dets), gram_det.reshape((count, 1)))
        raise DimensionError(f"unknown invariant kind: {f.kind}")

    # ================= DISTANCES =================

    @staticmethod
    def _norm(diff, norm):
        if norm == "l1":
            return ops.l1_norm(diff, axis=-1)
        if norm == "l2":
            return ops.l2_norm(diff, axis=-1)
        raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")

    @staticmethod
    def orbit_distance(f, h, h2, norm="l1"):
        """||f(h) - f(h2)||, one value per matrix pair"""
        return InvariantService._norm(ops.sub(InvariantService.evaluate(f, h), InvariantService.evaluate(f, h2)), norm)

    @staticmethod
    def orbit_loss(f, h, norm="l1"):
        """Distance of [h] to the identity orbit, with f(I) cached as a constant"""
        target = Tensor(f.identity_value)
        return InvariantService._norm(ops.sub(InvariantService.evaluate(f, h), target), norm)
