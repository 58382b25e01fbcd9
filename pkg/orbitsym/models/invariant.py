"""
Separating Invariant Model
Frozen description of an orbit-separating invariant f: R^{n x n} -> R^k
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from orbitsym.models.group import GroupSpec

KINDS = {
    "O": "gram",
    "SO": "gram-det",
    "Lorentz": "metric-gram",
    "SL": "det-only",
    "GL": "gl-rational",
    "Sym": "power-sums",
}


def reduced_dimension(n):
    """Target dimension of the random projection: 2n^2 + 1"""
    return 2 * n * n + 1


@dataclass(frozen=True, eq=False)
class SeparatingInvariant:
    group: GroupSpec
    kind: str
    k: int
    separation_domain: str
    exponents: Optional[np.ndarray] = None
    witnesses: Optional[np.ndarray] = None
    projection: Optional[np.ndarray] = None
    projection_seed: Optional[int] = None
    identity_value: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("exponents", "witnesses", "projection", "identity_value"):
            value = getattr(self, name)
            if value is not None:
                value.setflags(write=False)

    @property
    def raw_dimension(self):
        """Dimension before any projection"""
        return self.projection.shape[1] if self.projection is not None else self.k

    def with_changes(self, **changes):
        return replace(self, **changes)

    def __repr__(self):
        projected = f" projected->{self.k}" if self.projection is not None else ""
        return f"<SeparatingInvariant {self.kind} of {self.group.name} k={self.raw_dimension}{projected}>"
