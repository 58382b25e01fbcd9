"""
Batched LU Kernels
Partial-pivoting LU for stacks of small square matrices (n <= 8), with the
determinant, solve and inverse built on the same factorization
"""
from dataclasses import dataclass

import numpy as np

from orbitsym.errors import DimensionError

MAX_ORDER = 8


@dataclass(frozen=True)
class LUFactorization:
    """Packed factors of P·A = L·U for a stack of matrices"""
    lu: np.ndarray       # (B, n, n), unit-lower L below the diagonal, U on and above
    perm: np.ndarray     # (B, n), row i of P·A is row perm[i] of A
    sign: np.ndarray     # (B,), determinant of P
    batch_shape: tuple

    @property
    def n(self):
        return self.lu.shape[-1]

    @property
    def singular(self):
        """Per-matrix flag: an exactly zero pivot occurred"""
        return np.any(np.diagonal(self.lu, axis1=-2, axis2=-1) == 0.0, axis=-1)

    def det(self):
        diag = np.diagonal(self.lu, axis1=-2, axis2=-1)
        return (self.sign * np.prod(diag, axis=-1)).reshape(self.batch_shape)

    def solve(self, b):
        """Solve A·x = b for b of shape (..., n, k)"""
        n = self.n
        rhs = np.asarray(b, dtype=np.float64).reshape(-1, n, b.shape[-1])
        if rhs.shape[0] != self.lu.shape[0]:
            rhs = np.broadcast_to(rhs, (self.lu.shape[0],) + rhs.shape[1:])
        y = np.take_along_axis(rhs, self.perm[:, :, None], axis=1).copy()
        for i in range(n):
            if i:
                y[:, i] -= np.einsum("bj,bjk->bk", self.lu[:, i, :i], y[:, :i])
        x = y
        for i in reversed(range(n)):
            if i < n - 1:
                x[:, i] -= np.einsum("bj,bjk->bk", self.lu[:, i, i + 1:], x[:, i + 1:])
            x[:, i] /= self.lu[:, i, i][:, None]
        return x.reshape(self.batch_shape + (n, b.shape[-1]))

    def inverse(self):
        eye = np.broadcast_to(np.eye(self.n), (self.lu.shape[0], self.n, self.n))
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.solve(eye)


def check_square(a):
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {a.shape}")
    if a.shape[-1] > MAX_ORDER:
        raise DimensionError(f"matrix order {a.shape[-1]} exceeds supported maximum {MAX_ORDER}")


def lu_factor(a):
    """Factor every matrix in a (..., n, n) stack"""
    a = np.asarray(a, dtype=np.float64)
    check_square(a)
    n = a.shape[-1]
    batch_shape = a.shape[:-2]
    lu = a.reshape(-1, n, n).copy()
    count = lu.shape[0]
    rows = np.arange(count)
    perm = np.tile(np.arange(n), (count, 1))
    sign = np.ones(count)

    for k in range(n):
        pivot_rows = k + np.argmax(np.abs(lu[:, k:, k]), axis=1)
        swap = pivot_rows != k
        if swap.any():
            idx = rows[swap]
            other = pivot_rows[swap]
            held = lu[idx, k].copy()
            lu[idx, k] = lu[idx, other]
            lu[idx, other] = held
            held = perm[idx, k].copy()
            perm[idx, k] = perm[idx, other]
            perm[idx, other] = held
            sign[swap] *= -1.0
        if k == n - 1:
            break
        pivot = lu[:, k, k]
        nonzero = pivot != 0.0
        factors = lu[:, k + 1:, k] / np.where(nonzero, pivot, 1.0)[:, None]
        factors[~nonzero] = 0.0
        lu[:, k + 1:, k] = factors
        lu[:, k + 1:, k + 1:] -= factors[:, :, None] * lu[:, k, None, k + 1:]

    return LUFactorization(lu=lu, perm=perm, sign=sign, batch_shape=batch_shape)


def condition_estimate(a, a_inv):
    """1-norm condition number per matrix"""
    norm_a = np.max(np.sum(np.abs(a), axis=-2), axis=-1)
    norm_inv = np.max(np.sum(np.abs(a_inv), axis=-2), axis=-1)
    with np.errstate(invalid="ignore"):
        cond = norm_a * norm_inv
    return np.where(np.isfinite(cond), cond, np.inf)
