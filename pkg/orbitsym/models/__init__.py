"""
Models Package
Exports all domain types
"""
from orbitsym.models.tensor import Tensor
from orbitsym.models.group import GroupSpec
from orbitsym.models.invariant import SeparatingInvariant
from orbitsym.models.networks import IdentitySymmetrizer, Mlp, NoiseSpec, ScalarEquivariantNet
from orbitsym.models.symmetrized import SymmetrizedModel, TrainState
from orbitsym.models.records import Batch, ParticleEvent, PointSetDigit, Split

__all__ = [
    'Tensor', 'GroupSpec', 'SeparatingInvariant', 'IdentitySymmetrizer', 'Mlp', 'NoiseSpec',
    'ScalarEquivariantNet', 'SymmetrizedModel', 'TrainState', 'Batch', 'ParticleEvent',
    'PointSetDigit', 'Split',
]
