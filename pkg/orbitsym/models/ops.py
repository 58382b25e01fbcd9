"""
Differentiable Operations
Function subclasses and the functional API built on them.

Shapes follow numpy broadcasting for elementwise ops; matrix ops act on the
last two axes with any leading batch axes.
"""
import numpy as np

from orbitsym.config import Config
from orbitsym.errors import DimensionError, GradientUnavailableError, InvertibilityError
from orbitsym.models.linalg import check_square, condition_estimate, lu_factor
from orbitsym.models.tensor import Function, Tensor, as_tensor


def _swap(a):
    return np.swapaxes(a, -1, -2)


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"shapes {a.shape} and {b.shape} are not compatible") from exc


# ================= ELEMENTWISE =================


class Add(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b)
        return a + b

    def backward(self, grad):
        a, b = self.tensors
        return self.unbroadcast(grad, a.shape), self.unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b)
        return a - b

    def backward(self, grad):
        a, b = self.tensors
        return self.unbroadcast(grad, a.shape), self.unbroadcast(-grad, b.shape)


class Mul(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b)
        return a * b

    def backward(self, grad):
        a, b = self.tensors
        return (
            self.unbroadcast(grad * b.data, a.shape),
            self.unbroadcast(grad * a.data, b.shape),
        )


class Div(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b)
        return a / b

    def backward(self, grad):
        a, b = self.tensors
        return (
            self.unbroadcast(grad / b.data, a.shape),
            self.unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Power(Function):
    """x ** e for a constant exponent array; e == 0 entries pass no gradient"""

    def forward(self, a, exponent):
        self.exponent = np.asarray(exponent, dtype=np.float64)
        return np.power(a, self.exponent)

    def backward(self, grad):
        (a,) = self.tensors
        e = self.exponent
        with np.errstate(divide="ignore", invalid="ignore"):
            local = np.where(e == 0.0, 0.0, e * np.power(a.data, np.where(e == 0.0, 1.0, e - 1.0)))
        return (self.unbroadcast(grad * local, a.shape),)


class SiLU(Function):
    def forward(self, a):
        e = np.exp(-np.abs(a))
        self.sigmoid = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return a * self.sigmoid

    def backward(self, grad):
        (a,) = self.tensors
        s = self.sigmoid
        return (grad * s * (1.0 + a.data * (1.0 - s)),)


class ReLU(Function):
    def forward(self, a):
        return np.maximum(a, 0.0)

    def backward(self, grad):
        (a,) = self.tensors
        return (grad * (a.data > 0.0),)


class Abs(Function):
    def forward(self, a):
        return np.abs(a)

    def backward(self, grad):
        (a,) = self.tensors
        return (grad * np.sign(a.data),)


# ================= SHAPE =================


class Transpose(Function):
    def forward(self, a):
        if a.ndim < 2:
            raise DimensionError(f"transpose needs at least 2 axes, got shape {a.shape}")
        return _swap(a)

    def backward(self, grad):
        return (_swap(grad),)


class Reshape(Function):
    def forward(self, a, shape):
        try:
            return a.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"cannot reshape {a.shape} into {shape}") from exc

    def backward(self, grad):
        (a,) = self.tensors
        return (grad.reshape(a.shape),)


class GetItem(Function):
    def forward(self, a, idx):
        self.idx = idx
        return a[idx]

    def backward(self, grad):
        (a,) = self.tensors
        out = np.zeros_like(a.data)
        np.add.at(out, self.idx, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError as exc:
            raise DimensionError(str(exc)) from exc

    def backward(self, grad):
        sizes = [t.shape[self.axis] for t in self.tensors]
        splits = np.cumsum(sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


# ================= REDUCTIONS =================


def _expand_reduced(grad, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(grad, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            grad = np.expand_dims(grad, ax)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.axis, self.keepdims = axis, keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        (a,) = self.tensors
        return (np.array(_expand_reduced(grad, a.shape, self.axis, self.keepdims)),)


class Mean(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.axis, self.keepdims = axis, keepdims
        out = np.mean(a, axis=axis, keepdims=keepdims)
        self.count = a.size // max(np.size(out), 1)
        return out

    def backward(self, grad):
        (a,) = self.tensors
        return (np.array(_expand_reduced(grad, a.shape, self.axis, self.keepdims)) / self.count,)


class Prod(Function):
    """Product along one axis; gradient uses exclusive products so zeros are safe"""

    def forward(self, a, axis=-1):
        self.axis = axis
        return np.prod(a, axis=axis)

    def backward(self, grad):
        (a,) = self.tensors
        moved = np.moveaxis(a.data, self.axis, -1)
        ones = np.ones(moved.shape[:-1] + (1,))
        left = np.concatenate([ones, np.cumprod(moved, axis=-1)[..., :-1]], axis=-1)
        right = np.concatenate([np.cumprod(moved[..., ::-1], axis=-1)[..., ::-1][..., 1:], ones], axis=-1)
        local = np.moveaxis(left * right, -1, self.axis)
        return (np.expand_dims(grad, self.axis) * local,)


class L1Norm(Function):
    def forward(self, a, axis=-1):
        self.axis = axis
        return np.sum(np.abs(a), axis=axis)

    def backward(self, grad):
        (a,) = self.tensors
        return (np.expand_dims(grad, self.axis) * np.sign(a.data),)


class L2Norm(Function):
    def forward(self, a, axis=-1):
        self.axis = axis
        self.norm = np.sqrt(np.sum(a * a, axis=axis))
        return self.norm

    def backward(self, grad):
        (a,) = self.tensors
        norm = np.expand_dims(self.norm, self.axis)
        safe = np.where(norm == 0.0, 1.0, norm)
        local = np.where(norm == 0.0, 0.0, a.data / safe)
        return (np.expand_dims(grad, self.axis) * local,)


# ================= LOSSES =================


class Softmax(Function):
    def forward(self, a, axis=-1):
        self.axis = axis
        shifted = a - np.max(a, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        s = self.out
        return (s * (grad - np.sum(grad * s, axis=self.axis, keepdims=True)),)


class CrossEntropy(Function):
    """Mean negative log-likelihood of integer labels under softmax(logits)"""

    def forward(self, logits, labels=None):
        labels = np.asarray(labels, dtype=np.int64)
        if logits.ndim != 2 or labels.shape != (logits.shape[0],):
            raise DimensionError(f"cross_entropy needs (B, C) logits and (B,) labels, got {logits.shape}, {labels.shape}")
        self.labels = labels
        shifted = logits - np.max(logits, axis=1, keepdims=True)
        log_norm = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        log_probs = shifted - log_norm
        self.probs = np.exp(log_probs)
        return -np.mean(log_probs[np.arange(len(labels)), labels])

    def backward(self, grad):
        count = len(self.labels)
        local = self.probs.copy()
        local[np.arange(count), self.labels] -= 1.0
        return (grad * local / count,)


class MeanSquaredError(Function):
    def forward(self, pred, target):
        if pred.shape != target.shape:
            raise DimensionError(f"mse needs equal shapes, got {pred.shape} and {target.shape}")
        self.diff = pred - target
        return np.mean(self.diff * self.diff)

    def backward(self, grad):
        local = grad * 2.0 * self.diff / self.diff.size
        return local, -local


# ================= LINEAR ALGEBRA =================


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
        try:
            return np.matmul(a, b)
        except ValueError as exc:
            raise DimensionError(str(exc)) from exc

    def backward(self, grad):
        a, b = self.tensors
        grad_a = np.matmul(grad, _swap(b.data)) if a.requires_grad else None
        grad_b = np.matmul(_swap(a.data), grad) if b.requires_grad else None
        return (
            None if grad_a is None else self.unbroadcast(grad_a, a.shape),
            None if grad_b is None else self.unbroadcast(grad_b, b.shape),
        )


class Determinant(Function):
    def forward(self, a):
        self.a = a
        self.factorization = lu_factor(a)
        self.det = self.factorization.det()
        return self.det

    def backward(self, grad):
        fact = self.factorization
        if np.any(fact.singular):
            raise GradientUnavailableError("determinant gradient undefined at a singular matrix")
        inv = fact.inverse()
        cond = condition_estimate(self.a, inv)
        worst = float(np.max(cond)) if cond.size else 0.0
        if not np.isfinite(worst) or worst > Config.COND_CEILING:
            raise GradientUnavailableError(
                f"determinant gradient unavailable: condition estimate {worst:.3e} exceeds {Config.COND_CEILING:g}"
            )
        scale = (np.asarray(grad) * self.det)[..., None, None]
        return (scale * _swap(inv),)


class Inverse(Function):
    def forward(self, a, ceiling=None):
        ceiling = Config.COND_CEILING if ceiling is None else ceiling
        fact = lu_factor(a)
        if np.any(fact.singular):
            raise InvertibilityError(np.inf)
        inv = fact.inverse()
        cond = condition_estimate(a, inv)
        worst = float(np.max(cond)) if cond.size else 0.0
        if not np.isfinite(worst) or worst > ceiling:
            raise InvertibilityError(worst)
        self.inv = inv
        return inv

    def backward(self, grad):
        inv_t = _swap(self.inv)
        return (-np.matmul(inv_t, np.matmul(grad, inv_t)),)


# ================= FUNCTIONAL API =================


def add(a, b):
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a, b):
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a, b):
    return Mul.apply(as_tensor(a), as_tensor(b))


def scalar_mul(a, scalar):
    return Mul.apply(as_tensor(a), Tensor(float(scalar)))


def div(a, b):
    return Div.apply(as_tensor(a), as_tensor(b))


def neg(a):
    return Neg.apply(as_tensor(a))


def power(a, exponent):
    if isinstance(exponent, Tensor):
        exponent = exponent.data
    return Power.apply(as_tensor(a), exponent=exponent)


def silu(a):
    return SiLU.apply(as_tensor(a))


def relu(a):
    return ReLU.apply(as_tensor(a))


def absolute(a):
    return Abs.apply(as_tensor(a))


def transpose(a):
    return Transpose.apply(as_tensor(a))


def reshape(a, shape):
    return Reshape.apply(as_tensor(a), shape=tuple(shape))


def getitem(a, idx):
    return GetItem.apply(as_tensor(a), idx=idx)


def concat(tensors, axis=0):
    return Concat.apply(*(as_tensor(t) for t in tensors), axis=axis)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    return Sum.apply(as_tensor(a), axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims=False):
    return Mean.apply(as_tensor(a), axis=axis, keepdims=keepdims)


def prod(a, axis=-1):
    return Prod.apply(as_tensor(a), axis=axis)


def l1_norm(a, axis=-1):
    return L1Norm.apply(as_tensor(a), axis=axis)


def l2_norm(a, axis=-1):
    return L2Norm.apply(as_tensor(a), axis=axis)


def softmax(a, axis=-1):
    return Softmax.apply(as_tensor(a), axis=axis)


def cross_entropy(logits, labels):
    return CrossEntropy.apply(as_tensor(logits), labels=np.asarray(labels))


def mse(pred, target):
    return MeanSquaredError.apply(as_tensor(pred), as_tensor(target))


def matmul(a, b):
    return MatMul.apply(as_tensor(a), as_tensor(b))


def determinant(a):
    a = as_tensor(a)
    check_square(a.data)
    return Determinant.apply(a)


def inverse(a, ceiling=None):
    a = as_tensor(a)
    check_square(a.data)
    return Inverse.apply(a, ceiling=ceiling)
