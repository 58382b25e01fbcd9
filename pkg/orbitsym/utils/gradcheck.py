"""
Gradient Checks
Central finite differences against reverse-mode gradients
"""
import numpy as np

from orbitsym.models.tensor import Tensor

FD_STEP = 1e-6


def numerical_gradient(fn, x, step=FD_STEP):
    """d sum(fn(x)) / dx by central differences; fn maps an ndarray to a Tensor or array"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        held = flat[i]
        flat[i] = held + step
        plus = _total(fn(x))
        flat[i] = held - step
        minus = _total(fn(x))
        flat[i] = held
        out[i] = (plus - minus) / (2.0 * step)
    return grad


def analytic_gradient(fn, x):
    """Reverse-mode gradient of sum(fn(x)) with respect to x"""
    leaf = Tensor.parameter(x)
    result = fn(leaf)
    total = result.sum() if result.size != 1 else result
    total.backward()
    return leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)


def relative_error(a, b, floor=1e-8):
    """max |a - b| / max(|a|, |b|, floor)"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def check_gradient(fn, x, step=FD_STEP):
    """Relative error between the reverse-mode and finite-difference gradients"""
    return relative_error(analytic_gradient(fn, x), numerical_gradient(fn, x, step))


def _total(value):
    data = value.data if isinstance(value, Tensor) else np.asarray(value)
    return float(np.sum(data))
