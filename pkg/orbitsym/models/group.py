"""
Group Model
Descriptor of a matrix group acting on n x n matrices by left multiplication
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

FAMILIES = ("SO", "O", "Lorentz", "SL", "GL", "Sym")

INVERSE_RULES = {
    "SO": "transpose",
    "O": "transpose",
    "Lorentz": "metric-conjugate-transpose",
    "SL": "exact-lu",
    "GL": "exact-lu",
    "Sym": "permutation-transpose",
}


def minkowski_metric(n):
    """diag(+1, -1, ..., -1)"""
    return np.diag([1.0] + [-1.0] * (n - 1))


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """Immutable group descriptor; the representation is the identity map"""
    family: str
    n: int
    name: str
    metric: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.metric is not None:
            self.metric.setflags(write=False)

    @property
    def inverse_rule(self):
        return INVERSE_RULES[self.family]

    @property
    def is_orthogonal(self):
        return self.family in ("SO", "O")

    @property
    def full_rank_only(self):
        """Orbit separation of the group's invariant holds on full-rank inputs only"""
        return self.family in ("Lorentz", "SL", "GL")

    @property
    def bilinear_form(self):
        """Matrix of the invariant bilinear form used for Gram scalars"""
        return self.metric if self.metric is not None else np.eye(self.n)

    def identity(self):
        return np.eye(self.n)

    def __repr__(self):
        return f"<GroupSpec {self.name}>"

    def __eq__(self, other):
        return isinstance(other, GroupSpec) and (self.family, self.n) == (other.family, other.n)

    def __hash__(self):
        return hash((self.family, self.n))
