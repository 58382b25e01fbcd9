"""
Group Service
Parsing, sampling, membership, approximate inverses and actions for the
supported matrix groups
"""
import logging
import math
import re

import numpy as np

from orbitsym.config import Config
from orbitsym.errors import DimensionError, SamplingError, UsageError
from orbitsym.models import ops
from orbitsym.models.group import GroupSpec, minkowski_metric
from orbitsym.models.linalg import MAX_ORDER, lu_factor
from orbitsym.models.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

_GROUP_PATTERN = re.compile(r"^(so|o|sl|gl|sym)(\d+)$")
_LORENTZ_PATTERN = re.compile(r"^lorentz1(\d+)$")


class GroupService:
    """Operations on GroupSpec values"""

    @staticmethod
    def parse(name):
        """
        Parse a group string: so2, so3, o2, o<n>, lorentz13, sl<n>, gl<n>, sym<n>.
        Spaces and underscores are ignored.
        """
        key = re.sub(r"[\s_]", "", str(name).lower())
        match = _LORENTZ_PATTERN.match(key) if key.startswith("lorentz") else None
        if match:
            n = 1 + int(match.group(1))
            GroupService._check_order(name, n)
            return GroupSpec(family="Lorentz", n=n, name=key, metric=minkowski_metric(n))

        match = _GROUP_PATTERN.match(key)
        if not match:
            raise UsageError(f"unsupported group string: {name!r}")
        prefix, n = match.group(1), int(match.group(2))
        GroupService._check_order(name, n)
        family = {"so": "SO", "o": "O", "sl": "SL", "gl": "GL", "sym": "Sym"}[prefix]
        metric = np.eye(n) if family in ("SO", "O") else None
        return GroupSpec(family=family, n=n, name=key, metric=metric)

    @staticmethod
    def _check_order(name, n):
        if not 1 <= n <= MAX_ORDER:
            raise UsageError(f"unsupported group string: {name!r} (n must lie in 1..{MAX_ORDER})")

    # ================= SAMPLING =================

    @staticmethod
    def rotation2d(theta):
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, -s], [s, c]])

    @staticmethod
    def boost(n, axis, rapidity):
        """Lorentz boost mixing time (index 0) with spatial index axis"""
        g = np.eye(n)
        ch, sh = math.cosh(rapidity), math.sinh(rapidity)
        g[0, 0] = g[axis, axis] = ch
        g[0, axis] = g[axis, 0] = sh
        return g

    @staticmethod
    def _special_orthogonal(n, rng):
        if n == 1:
            return np.ones((1, 1))
        if n == 2:
            return GroupService.rotation2d(rng.uniform(0.0, 2.0 * math.pi))
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return q

    @staticmethod
    def sample_element(spec, rng, rapidity=None):
        """Draw one exact group element"""
        n = spec.n
        if spec.family == "SO":
            return GroupService._special_orthogonal(n, rng)

        if spec.family == "O":
            g = GroupService._special_orthogonal(n, rng)
            if rng.random() < 0.5:
                g = g @ np.diag([-1.0] + [1.0] * (n - 1))
            return g

        if spec.family == "Lorentz":
            r = Config.BOOST_RAPIDITY if rapidity is None else rapidity
            g = np.eye(n)
            g[1:, 1:] = GroupService._special_orthogonal(n - 1, rng)
            for axis in range(1, n):
                g = g @ GroupService.boost(n, axis, rng.uniform(-r, r))
            if rng.random() < 0.5:
                parity = np.eye(n)
                parity[1, 1] = -1.0
                g = g @ parity
            if rng.random() < 0.5:
                reversal = np.eye(n)
                reversal[0, 0] = -1.0
                g = g @ reversal
            return g

        if spec.family == "Sym":
            perm = rng.permutation(n)
            g = np.zeros((n, n))
            g[perm, np.arange(n)] = 1.0
            return g

        if spec.family == "SL":
            for _ in range(Config.MAX_TRIES):
                a = rng.standard_normal((n, n))
                det = np.linalg.det(a)
                if det > 1e-3:
                    return a * det ** (-1.0 / n)
            raise SamplingError(f"could not sample an element of {spec.name}")

        if spec.family == "GL":
            for _ in range(Config.MAX_TRIES):
                a = rng.standard_normal((n, n))
                if abs(np.linalg.det(a)) >= 1e-3:
                    return a
            raise SamplingError(f"could not sample an element of {spec.name}")

        raise UsageError(f"unsupported group family: {spec.family}")

    @staticmethod
    def sample_elements(spec, rng, count, rapidity=None):
        """Stack of count exact elements, shape (count, n, n)"""
        if count == 0:
            return np.zeros((0, spec.n, spec.n))
        return np.stack([GroupService.sample_element(spec, rng, rapidity) for _ in range(count)])

    # ================= MEMBERSHIP =================

    @staticmethod
    def membership_defect(spec, m):
        """
        Size of the violation of the family's defining relation, per matrix.
        GL reports |det|^-1 so that small values still mean membership.
        """
        m = np.asarray(m, dtype=np.float64)
        if m.ndim < 2 or m.shape[-2:] != (spec.n, spec.n):
            raise DimensionError(f"expected {spec.n}x{spec.n} matrices, got shape {m.shape}")
        eye = np.eye(spec.n)
        mt = np.swapaxes(m, -1, -2)

        if spec.family in ("O", "SO"):
            defect = np.max(np.abs(mt @ m - eye), axis=(-2, -1))
            if spec.family == "SO":
                defect = np.maximum(defect, np.abs(lu_factor(m).det() - 1.0))
            return defect
        if spec.family == "Lorentz":
            lam = spec.metric
            return np.max(np.abs(mt @ lam @ m - lam), axis=(-2, -1))
        if spec.family == "SL":
            return np.abs(lu_factor(m).det() - 1.0)
        if spec.family == "GL":
            with np.errstate(divide="ignore"):
                return 1.0 / np.abs(lu_factor(m).det())
        if spec.family == "Sym":
            near_one = np.abs(m - 1.0)
            entry = np.minimum(np.abs(m), near_one)
            ones = near_one <= 0.5
            rows_ok = np.all(np.sum(ones, axis=-1) == 1, axis=-1)
            cols_ok = np.all(np.sum(ones, axis=-2) == 1, axis=-1)
            defect = np.max(entry, axis=(-2, -1))
            return np.where(rows_ok & cols_ok, defect, np.inf)
        raise UsageError(f"unsupported group family: {spec.family}")

    @staticmethod
    def is_member(spec, m, tol=None):
        """True iff the defining relation holds within tol (max-norm, absolute)"""
        tol = Config.MEMBER_TOL if tol is None else tol
        m = np.asarray(m.data if isinstance(m, Tensor) else m, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionError(f"is_member takes a single matrix, got shape {m.shape}")
        if spec.family == "GL":
            return bool(abs(float(lu_factor(m).det())) > tol)
        return bool(GroupService.membership_defect(spec, m) <= tol)

    # ================= INVERSES AND ACTIONS =================

    @staticmethod
    def approx_inverse(spec, h):
        """
        Inverse of h assuming it is close to a group element:
        transpose for orthogonal and permutation groups, metric-conjugated
        transpose for Lorentz groups, exact LU inverse for SL and GL.
        """
        h = as_tensor(h)
        if h.shape[-2:] != (spec.n, spec.n):
            raise DimensionError(f"expected {spec.n}x{spec.n} matrices, got shape {h.shape}")
        rule = spec.inverse_rule
        if rule in ("transpose", "permutation-transpose"):
            return ops.transpose(h)
        if rule == "metric-conjugate-transpose":
            lam = Tensor(spec.metric)
            return ops.matmul(ops.matmul(lam, ops.transpose(h)), lam)
        return ops.inverse(h)

    @staticmethod
    def act(spec, g, x):
        """Left multiplication g·x; x holds n-vectors as columns (optionally batched)"""
        x = as_tensor(x)
        g = as_tensor(g)
        if x.ndim < 2 or x.shape[-2] != spec.n or g.shape[-2:] != (spec.n, spec.n):
            raise DimensionError(f"cannot act with {g.shape} on {x.shape} for {spec.name}")
        return ops.matmul(g, x)
