"""
# src/domains/entities/motion_model.py

Samples and fitted PCA model of atlas-space Lagrangian motion fields, plus the transported motion container

图谱空间拉格朗日运动场的样本与 PCA 模型, 以及变换后运动场容器
"""


from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from src.infrastructure.errors import ShapeMismatchError
from src.infrastructure.fieldcore import GridGeometry, RegionMask, VectorVolume


@dataclass(frozen=True, eq=False)
class TransportedMotion:
    """
    Atlas-space displacement per frame label, meaningful inside region
    """

    subject_id: str
    frames: Dict[str, VectorVolume]
    region: RegionMask

    def __post_init__(self) -> None:
        for label, volume in self.frames.items():
            self.region.geometry.check_same(volume.geometry, f"region and frame {label} of {self.subject_id}")


@dataclass(frozen=True, eq=False)
class MotionSample:
    """
    Displacement vector over the support, ordered voxel-major then (x, y, z)
    """

    subject_id: str
    label: str
    vector: np.ndarray = field(repr=False)

    @classmethod
    def from_volume(cls, subject_id: str, label: str, volume: VectorVolume, support: np.ndarray) -> "MotionSample":
        return cls(subject_id, label, volume.vectors[np.asarray(support, dtype=bool)].reshape(-1).copy())


@dataclass(frozen=True, eq=False)
class MotionModel:
    """
    sample = mean + components @ b, components orthonormal columns, variances descending
    """

    label: str
    mean: np.ndarray = field(repr=False)
    components: np.ndarray = field(repr=False)
    variances: np.ndarray = field(repr=False)
    loadings: Dict[str, np.ndarray] = field(repr=False)
    spectrum: np.ndarray = field(repr=False) # All n - 1 Gram eigenvalues, zeros included

    @property
    def n_modes(self) -> int:
        return int(self.components.shape[1])

    @property
    def subject_ids(self) -> List[str]:
        return list(self.loadings.keys())

    def variance_percent(self, modes: int) -> List[float]:
        total = float(np.sum(self.spectrum))
        values = list(self.spectrum[:modes]) + [0.0] * max(0, modes - len(self.spectrum))
        if total <= 0:
            return [0.0] * modes
        return [100.0 * float(v) / total for v in values[:modes]]


def vector_to_volume(vector: np.ndarray, support: np.ndarray, geometry: GridGeometry) -> VectorVolume:
    """
    Scatter a support-ordered vector back onto the grid, zero outside the support
    """
    support = np.asarray(support, dtype=bool)
    if vector.size != 3 * int(support.sum()):
        raise ShapeMismatchError(f"Vector of length {vector.size} does not fit a support of {int(support.sum())} voxels")
    out = np.zeros(geometry.shape + (3,))
    out[support] = vector.reshape(-1, 3)
    return VectorVolume(geometry, out)


__all__ = ["TransportedMotion", "MotionSample", "MotionModel", "vector_to_volume"]
