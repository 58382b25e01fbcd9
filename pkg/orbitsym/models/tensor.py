"""
Tensor Model
Dense float64 arrays with reverse-mode differentiation.

Each operation is a `Function` subclass (see `ops.py`). Applying it records
the producing function on the output tensor together with a monotonically
increasing tape position, so the backward pass can replay the graph in
reverse recording order without a separate topological sort.
"""
import itertools
import logging
from typing import Any, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

_tape_position = itertools.count()


class Function:
    """Base class for differentiable operations"""

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """
        Map dL/d(output) to one dL/d(input) per input tensor.
        Entries may be None for inputs that take no gradient.
        """
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(out_data, creator=func if requires_grad else None, requires_grad=requires_grad)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so grad matches shape"""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, size in enumerate(shape):
            if size == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """
    A float64 array that may take part in a differentiation graph.

    Leaves created with requires_grad=True accumulate `.grad` (a numpy array
    of the same shape) when `backward` runs on a downstream scalar.
    """

    __array_priority__ = 100

    def __init__(self, data, creator: Optional[Function] = None, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.creator = creator
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._position = next(_tape_position)

    # ================= CONSTRUCTORS =================

    @classmethod
    def parameter(cls, data, name: str = "") -> "Tensor":
        return cls(np.array(data, dtype=np.float64), requires_grad=True, name=name)

    @classmethod
    def constant(cls, data) -> "Tensor":
        if isinstance(data, Tensor):
            return data
        return cls(data, requires_grad=False)

    # ================= PROPERTIES =================

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    @property
    def T(self) -> "Tensor":
        return ops.transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        """Copy of the values outside any graph"""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # ================= BACKWARD =================

    def backward(self, grad=None) -> None:
        """
        Accumulate gradients into every reachable leaf that requires them.
        Without an explicit grad the tensor must hold a single value.
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward without grad needs a single-element tensor")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)

        nodes = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in nodes:
                continue
            nodes[id(node)] = node
            if node.creator is not None:
                stack.extend(t for t in node.creator.tensors if t.requires_grad)

        grads = {id(self): grad}
        for node in sorted(nodes.values(), key=lambda t: t._position, reverse=True):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node.creator is None:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            input_grads = node.creator.backward(node_grad)
            for parent, parent_grad in zip(node.creator.tensors, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    # ================= OPERATORS =================

    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        return ops.matmul(other, self)

    def __pow__(self, exponent):
        return ops.power(self, exponent)

    def __getitem__(self, idx):
        return ops.getitem(self, idx)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


from orbitsym.models import ops  # noqa: E402
