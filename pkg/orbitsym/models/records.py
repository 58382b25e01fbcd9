"""
Dataset Records
Single examples, minibatches and whole dataset splits.

A split stores its examples stacked: `x` holds the equivariant channel
(particle momenta as 4x4 matrices, point-set coordinates as 2xm matrices),
`side` the invariant per-column channel (point-set values) when there is one.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ParticleEvent:
    """Columns p1..p4 of momenta are 4-vectors, time component first"""
    momenta: np.ndarray
    label: float


@dataclass(frozen=True)
class PointSetDigit:
    values: np.ndarray   # (1, m)
    coords: np.ndarray   # (2, m)
    label: int


@dataclass
class Batch:
    x: np.ndarray
    labels: np.ndarray
    side: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.labels)


@dataclass
class Split:
    name: str
    kind: str            # "particle" or "pointset"
    x: np.ndarray
    labels: np.ndarray
    side: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.labels)

    def batch(self, idx):
        side = None if self.side is None else self.side[idx]
        return Batch(x=self.x[idx], labels=self.labels[idx], side=side)

    def full(self):
        return Batch(x=self.x, labels=self.labels, side=self.side)

    def records(self):
        if self.kind == "particle":
            return [ParticleEvent(momenta=m, label=float(y)) for m, y in zip(self.x, self.labels)]
        return [
            PointSetDigit(values=v.reshape(1, -1), coords=c, label=int(y))
            for v, c, y in zip(self.side, self.x, self.labels)
        ]

    @classmethod
    def from_events(cls, name, events):
        x = np.stack([e.momenta for e in events]) if events else np.zeros((0, 4, 4))
        labels = np.array([e.label for e in events], dtype=np.float64)
        return cls(name=name, kind="particle", x=x, labels=labels)

    @classmethod
    def from_digits(cls, name, digits, points):
        if not digits:
            return cls(name=name, kind="pointset", x=np.zeros((0, 2, points)),
                       labels=np.zeros(0, dtype=np.int64), side=np.zeros((0, points)))
        return cls(
            name=name,
            kind="pointset",
            x=np.stack([d.coords for d in digits]),
            labels=np.array([d.label for d in digits], dtype=np.int64),
            side=np.stack([d.values.reshape(-1) for d in digits]),
        )
