"""
# src/domains/entities

Domain entities shared by the services, and the pipeline run buffer

各服务共享的领域实体, 以及流水线运行缓冲区
"""


from .diffeo_field import DiffeoField, PhasePair
from .atlas import AffineTransform, Atlas
from .strain_field import STRAIN_COMPONENTS, StrainField, RegionStats
from .motion_model import TransportedMotion, MotionSample, MotionModel, vector_to_volume


__all__ = [
    "DiffeoField",
    "PhasePair",
    "AffineTransform",
    "Atlas",
    "STRAIN_COMPONENTS",
    "StrainField",
    "RegionStats",
    "TransportedMotion",
    "MotionSample",
    "MotionModel",
    "vector_to_volume",
]
