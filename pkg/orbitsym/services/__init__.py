"""
Services Package
"""
from orbitsym.services.group_service import GroupService
from orbitsym.services.invariant_service import InvariantService
from orbitsym.services.equivariant_service import EquivariantService
from orbitsym.services.symmetrization_service import SymmetrizationService
from orbitsym.services.data_service import DataService
from orbitsym.services.training_service import TrainingService
from orbitsym.services.checkpoint_service import CheckpointService
from orbitsym.services.check_service import CheckService

__all__ = [
    'GroupService', 'InvariantService', 'EquivariantService', 'SymmetrizationService',
    'DataService', 'TrainingService', 'CheckpointService', 'CheckService',
]
