"""
Network Models
Plain MLPs, noise specifications and the scalars-based equivariant
symmetrizer q(x, eps) -> h
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from orbitsym.models import ops
from orbitsym.models.group import GroupSpec
from orbitsym.models.tensor import Tensor

ACTIVATIONS = {"silu": ops.silu, "relu": ops.relu}

# 90 degree rotation; commutes with SO(2), anticommutes with reflections
QUARTER_TURN = np.array([[0.0, -1.0], [1.0, 0.0]])


class Mlp:
    """Fully connected network; depth counts linear layers"""

    def __init__(self, in_dim, hidden, out_dim, depth, rng, activation="silu", name="mlp"):
        self.in_dim, self.hidden, self.out_dim, self.depth = in_dim, hidden, out_dim, depth
        self.activation = activation
        self.name = name
        dims = [in_dim] + [hidden] * (depth - 1) + [out_dim]
        self.weights = []
        self.biases = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / math.sqrt(max(fan_in, 1))
            self.weights.append(Tensor.parameter(rng.uniform(-bound, bound, (fan_in, fan_out)), name=f"{name}.{i}.weight"))
            self.biases.append(Tensor.parameter(rng.uniform(-bound, bound, (fan_out,)), name=f"{name}.{i}.bias"))

    def __call__(self, x):
        act = ACTIVATIONS[self.activation]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = ops.add(ops.matmul(x, w), b)
            if i < last:
                x = act(x)
        return x

    def parameters(self):
        named = []
        for w, b in zip(self.weights, self.biases):
            named.extend([(w.name, w), (b.name, b)])
        return named

    def zero_output_layer(self):
        self.weights[-1].data[...] = 0.0
        self.biases[-1].data[...] = 0.0

    def describe(self):
        return {
            "in_dim": self.in_dim,
            "hidden": self.hidden,
            "out_dim": self.out_dim,
            "depth": self.depth,
            "activation": self.activation,
        }


@dataclass(eq=False)
class NoiseSpec:
    """
    Noise eps of shape (n, d_eps).

    gaussian            iid standard normal, acts with the group (standard action)
    uniform-trainable   eps = a + b * u, u ~ Unif[0, 1]^{n x d}, trivial action
    deterministic       eps = a (canonicalization); with standard action no
                        noise columns are used at all
    """
    n: int
    d_eps: int
    distribution: str
    action: str
    offset: Optional[Tensor] = None
    scale: Optional[Tensor] = None

    @classmethod
    def build(cls, n, d_eps, distribution, action, rng=None):
        """
        uniform-trainable starts at a = 0, b = 1. A deterministic offset starts
        at a Unif[0, 1] draw from rng so the canonical frame is not degenerate.
        """
        spec = cls(n=n, d_eps=d_eps, distribution=distribution, action=action)
        if distribution == "deterministic" and action == "standard":
            spec.d_eps = 0
        if not spec.d_eps:
            return spec
        if distribution == "uniform-trainable":
            spec.offset = Tensor.parameter(np.zeros((n, spec.d_eps)), name="noise.offset")
            spec.scale = Tensor.parameter(np.ones((n, spec.d_eps)), name="noise.scale")
        elif distribution == "deterministic":
            start = rng.uniform(0.0, 1.0, (n, spec.d_eps)) if rng is not None else np.full((n, spec.d_eps), 0.5)
            spec.offset = Tensor.parameter(start, name="noise.offset")
        return spec

    @property
    def stochastic(self):
        return self.d_eps > 0 and self.distribution != "deterministic"

    def parameters(self):
        named = []
        if self.offset is not None:
            named.append((self.offset.name, self.offset))
        if self.scale is not None:
            named.append((self.scale.name, self.scale))
        return named

    def draw_base(self, rng, count):
        """Raw randomness for count draws, shape (count, n, d_eps)"""
        shape = (count, self.n, self.d_eps)
        if not self.stochastic:
            return np.zeros(shape)
        if self.distribution == "gaussian":
            return rng.standard_normal(shape)
        return rng.uniform(0.0, 1.0, shape)

    def realize(self, base):
        """Turn raw draws into eps, differentiable in the trainable offset and scale"""
        if self.d_eps == 0:
            return None
        if self.distribution == "gaussian":
            return Tensor(base)
        if self.distribution == "deterministic":
            return ops.add(Tensor(np.zeros_like(base)), self.offset)
        return ops.add(self.offset, ops.mul(self.scale, Tensor(base)))


class ScalarEquivariantNet:
    """
    Equivariant symmetrizer built from invariant scalars weighting equivariant vectors.

    gram      the MLP reads the full Gram matrix U^T L U of all columns and returns
              coefficients C (m x n); h = U C
    anchored  one shared MLP reads, per column, its inner products with a few
              anchor columns (noise columns and a weighted centroid); h = U C / m
    With orientation channels (SO(2) only) the 90 degree turned columns J U add a
    second basis and signed areas det[u_i, u_j] join the scalars.
    """

    def __init__(self, group: GroupSpec, data_cols, noise: NoiseSpec, rng, hidden=128, depth=3,
                 combine="concat", scalars="gram", orientation=False, side_dim=0):
        if orientation and group.n != 2:
            raise ValueError("orientation channels are defined for n = 2 only")
        self.group = group
        self.data_cols = data_cols
        self.noise = noise
        self.combine = combine
        self.scalars = scalars
        self.orientation = orientation
        self.side_dim = side_dim
        self.hidden, self.depth = hidden, depth

        noise_cols = noise.d_eps if combine == "concat" else 0
        self.m = data_cols + noise_cols
        channels = 2 if orientation else 1
        if scalars == "gram":
            in_dim = self.m * self.m * channels + side_dim
            out_dim = self.m * group.n * channels
        else:
            anchors = 1 + noise.d_eps
            in_dim = anchors * channels + 1 + side_dim + 1 + anchors * anchors * channels
            out_dim = group.n * channels
        self.mlp = Mlp(in_dim, hidden, out_dim, depth, rng, activation="silu", name="symmetrizer")

    def parameters(self):
        return self.mlp.parameters() + self.noise.parameters()

    def describe(self):
        return {
            "group": self.group.name,
            "data_cols": self.data_cols,
            "noise": {"d_eps": self.noise.d_eps, "distribution": self.noise.distribution, "action": self.noise.action},
            "combine": self.combine,
            "scalars": self.scalars,
            "orientation": self.orientation,
            "side_dim": self.side_dim,
            "hidden": self.hidden,
            "depth": self.depth,
        }


class IdentitySymmetrizer:
    """Always returns h = I; turns the symmetrized model back into its base model"""

    scalars = "identity"

    def __init__(self, group: GroupSpec, data_cols):
        self.group = group
        self.data_cols = data_cols
        self.noise = NoiseSpec(n=group.n, d_eps=0, distribution="deterministic", action="trivial")

    def parameters(self):
        return []

    def describe(self):
        return {"group": self.group.name, "data_cols": self.data_cols, "scalars": self.scalars}
