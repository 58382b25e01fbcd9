"""
Symmetrized Model
The pair (base model, symmetrizer) realizing
Phi(x) = mean_i h_i . phi(h_i^-1 . x), h_i = q(x, eps_i),
and the optimizer state used while training it
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from orbitsym.models.group import GroupSpec
from orbitsym.models.networks import Mlp

ENCODERS = ("matrix", "pointset", "particle-scalars", "pointset-scalars")
OUTPUT_ACTIONS = ("invariant-scalar", "equivariant")


@dataclass(eq=False)
class SymmetrizedModel:
    base: Mlp
    symmetrizer: object      # ScalarEquivariantNet or IdentitySymmetrizer
    group: GroupSpec
    task: str
    method: str
    encoder: str
    samples_train: int = 1
    samples_eval: int = 16
    output_action: str = "invariant-scalar"
    contract: bool = False

    @property
    def noise(self):
        return self.symmetrizer.noise

    @property
    def classification(self):
        return self.task == "rotated-digits"

    @property
    def learns_symmetrizer(self):
        return bool(self.symmetrizer.parameters())

    def parameters(self):
        """(name, tensor) pairs in declaration order: base first, then symmetrizer"""
        return self.base.parameters() + self.symmetrizer.parameters()

    def snapshot(self):
        return [t.data.copy() for _, t in self.parameters()]

    def restore(self, values):
        for (_, tensor), value in zip(self.parameters(), values):
            tensor.data[...] = value

    def describe(self):
        return {
            "task": self.task,
            "method": self.method,
            "group": self.group.name,
            "encoder": self.encoder,
            "output_action": self.output_action,
            "contract": self.contract,
            "samples_train": self.samples_train,
            "samples_eval": self.samples_eval,
            "base": self.base.describe(),
            "symmetrizer": self.symmetrizer.describe(),
        }


@dataclass
class TrainState:
    """Adam moments keyed by parameter name, plus running metrics"""
    lr: float
    lam: float
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: Optional[dict] = None
    history: List[dict] = field(default_factory=list)
    best_metric: Optional[float] = None
    best_epoch: Optional[int] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
