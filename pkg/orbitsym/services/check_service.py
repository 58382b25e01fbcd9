"""
Check Service
Property suite for one group: orbit-space metric axioms, invariance,
separation, projection, membership, approximate inverses, the
loss-zero-iff-member link and loss gradients
"""
import logging
from dataclasses import dataclass

import numpy as np

from orbitsym.models import ops
from orbitsym.models.tensor import Tensor
from orbitsym.services.group_service import GroupService
from orbitsym.services.invariant_service import InvariantService
from orbitsym.utils.gradcheck import check_gradient

logger = logging.getLogger(__name__)

INTRA_TOL = 1e-9
INTER_FLOOR = 1e-6
MEMBER_TOL = 1e-8
INVERSE_TOL = 1e-10
LU_INVERSE_TOL = 1e-8
CONVERSE_TOL = 1e-4
GRAD_TOL = 1e-5
GRAD_TRIALS = 20
CONVERSE_STARTS = 50
CONVERSE_OFFSET = 0.05
DESCENT_STEPS = 30
PINV_RCOND = 1e-10


@dataclass
class PropertyRow:
    name: str
    defect: float
    threshold: float
    passed: bool
    note: str = ""

    def as_dict(self):
        return {"name": self.name, "defect": self.defect, "threshold": self.threshold,
                "passed": self.passed, "note": self.note}


def _row(name, defect, threshold, below=True, note=""):
    defect = float(defect)
    passed = defect <= threshold if below else defect > threshold
    return PropertyRow(name=name, defect=defect, threshold=threshold, passed=bool(passed), note=note)


class CheckService:
    """Run the property suite"""

    @staticmethod
    def random_matrices(spec, rng, count):
        """Standard normal matrices; the separation domain of every family holds them almost surely"""
        return rng.standard_normal((count, spec.n, spec.n))

    @staticmethod
    def distances(f, a, b, norm="l1", chunk=128):
        parts = [
            InvariantService.orbit_distance(f, Tensor(a[s:s + chunk]), Tensor(b[s:s + chunk]), norm).data
            for s in range(0, len(a), chunk)
        ]
        return np.concatenate(parts) if parts else np.zeros(0)

    @staticmethod
    def values(f, h, chunk=128):
        return np.concatenate([InvariantService.evaluate(f, Tensor(h[s:s + chunk])).data for s in range(0, len(h), chunk)])

    @staticmethod
    def losses(f, h, norm="l1", chunk=128):
        return np.concatenate([
            InvariantService.orbit_loss(f, Tensor(h[s:s + chunk]), norm).data for s in range(0, len(h), chunk)
        ])

    @staticmethod
    def _relative(f, h, values):
        """values scaled by max(1, ||f(h)||_1) so tolerances hold for large invariant values"""
        scale = np.maximum(1.0, np.sum(np.abs(CheckService.values(f, h)), axis=-1))
        return values / scale

    @staticmethod
    def run(spec, trials, seed, norm="l1"):
        """One PropertyRow per property"""
        rng = np.random.default_rng(seed)
        f = InvariantService.for_group(spec, witness_seed=seed)
        rows = []

        a = CheckService.random_matrices(spec, rng, trials)
        b = CheckService.random_matrices(spec, rng, trials)
        c = CheckService.random_matrices(spec, rng, trials)
        g = GroupService.sample_elements(spec, rng, trials)
        g2 = GroupService.sample_elements(spec, rng, trials)

        d_ab = CheckService.distances(f, a, b, norm)
        d_ba = CheckService.distances(f, b, a, norm)
        d_bc = CheckService.distances(f, b, c, norm)
        d_ac = CheckService.distances(f, a, c, norm)

        # ================= METRIC AXIOMS =================
        rows.append(_row("non-negativity", np.max(np.maximum(-np.concatenate([d_ab, d_bc, d_ac]), 0.0)), 0.0))
        rows.append(_row("symmetry", np.max(np.abs(d_ab - d_ba)), 0.0, note="bitwise"))
        slack = CheckService._relative(f, a, d_ac - d_ab - d_bc)
        rows.append(_row("triangle", max(float(np.max(slack)), 0.0), INTRA_TOL))
        rows.append(_row("identity", np.max(CheckService.distances(f, a, a, norm)), 0.0))

        # ================= INVARIANCE AND SEPARATION =================
        moved = g @ a
        intra = CheckService._relative(f, a, CheckService.distances(f, a, moved, norm))
        rows.append(_row("intra-orbit", np.max(intra), INTRA_TOL))
        if spec.family == "GL":
            rows.append(PropertyRow("inter-orbit", float(np.min(d_ab)), INTER_FLOOR, True,
                                    note="n/a: GL acts transitively on full-rank matrices"))
        else:
            rows.append(_row("inter-orbit", np.min(d_ab), INTER_FLOOR, below=False, note="minimum"))

        projected = InvariantService.project(f, seed)
        if projected is not f:
            p_intra = CheckService._relative(projected, a, CheckService.distances(projected, a, moved, norm))
            p_inter = CheckService.distances(projected, a, b, norm)
            rows.append(_row("projection-intra", np.max(p_intra), INTRA_TOL,
                             note=f"k {f.k} -> {projected.k}"))
            if spec.family != "GL":
                rows.append(_row("projection-inter", np.min(p_inter), INTER_FLOOR, below=False, note="minimum"))

        # ================= GROUP STRUCTURE =================
        failures = sum(not GroupService.is_member(spec, m, MEMBER_TOL) for m in g)
        rows.append(_row("membership", float(failures), 0.0, note="failures"))
        closure = np.array([GroupService.is_member(spec, m, MEMBER_TOL) for m in g @ g2])
        rows.append(_row("closure", float(np.sum(~closure)), 0.0, note="failures"))
        inv = GroupService.approx_inverse(spec, Tensor(g)).data
        inverse_tol = INVERSE_TOL if spec.inverse_rule != "exact-lu" else LU_INVERSE_TOL
        rows.append(_row("approx-inverse", np.max(np.abs(inv @ g - np.eye(spec.n))), inverse_tol))

        # ================= ORBIT LOSS =================
        loss = CheckService.losses(f, g, norm)
        rows.append(_row("loss-at-members", np.max(loss), INTRA_TOL))
        if spec.family in ("O", "SO", "Lorentz", "SL"):
            rows.append(CheckService.converse_row(spec, f, g[:CONVERSE_STARTS], rng, norm))

        worst = 0.0
        for i in range(min(GRAD_TRIALS, trials)):
            h = a[i]
            worst = max(worst, check_gradient(lambda m: InvariantService.orbit_loss(f, m, norm), h))
        rows.append(_row("loss-gradient", worst, GRAD_TOL))

        logger.info("checked %s: %d/%d properties hold", spec.name, sum(r.passed for r in rows), len(rows))
        return rows

    @staticmethod
    def residual_jacobian(f, h):
        """f(h) - f(I) and its Jacobian with respect to vec(h), shapes (m, k) and (m, k, n^2)"""
        count, n = h.shape[0], f.group.n
        jacobian = np.zeros((count, f.k, n * n))
        residual = None
        for j in range(f.k):
            leaf = Tensor.parameter(h)
            values = ops.sub(InvariantService.evaluate(f, leaf), Tensor(f.identity_value))
            seed = np.zeros(values.shape)
            seed[:, j] = 1.0
            values.backward(seed)
            jacobian[:, j] = leaf.grad.reshape(count, n * n)
            residual = values.data
        return residual, jacobian

    @staticmethod
    def descend_orbit_loss(f, h, steps=DESCENT_STEPS):
        """Gauss-Newton on f(h) - f(I); stops early once every matrix is at the identity orbit"""
        h = np.array(h, dtype=np.float64)
        count, n = h.shape[0], f.group.n
        for _ in range(steps):
            residual, jacobian = CheckService.residual_jacobian(f, h)
            if np.max(np.abs(residual)) <= INTRA_TOL * 1e-3:
                break
            step = np.linalg.pinv(jacobian, rcond=PINV_RCOND) @ residual[..., None]
            h = h - step.reshape(count, n, n)
        return h

    @staticmethod
    def converse_row(spec, f, members, rng, norm="l1"):
        """
        Orbit loss pushed to zero from matrices off the group must land on
        members. Fails when no start reaches loss <= INTRA_TOL.
        """
        starts = members + CONVERSE_OFFSET * rng.standard_normal(members.shape)
        landed = CheckService.descend_orbit_loss(f, starts)
        small = CheckService.losses(f, landed, norm) <= INTRA_TOL
        note = f"{int(np.sum(small))}/{len(starts)} reached the identity orbit"
        if not np.any(small):
            return _row("small-loss-is-member", np.inf, CONVERSE_TOL, note=note)
        defects = GroupService.membership_defect(spec, landed[small])
        return _row("small-loss-is-member", np.max(defects), CONVERSE_TOL, note=note)

    @staticmethod
    def random_loss_median(spec, rng, count=1000, norm="l1"):
        """Median orbit loss of standard normal matrices"""
        f = InvariantService.for_group(spec)
        return float(np.median(CheckService.losses(f, CheckService.random_matrices(spec, rng, count), norm)))

