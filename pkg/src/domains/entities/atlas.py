"""
# src/domains/entities/atlas.py

Affine transforms and the groupwise atlas: template plus per-subject mappings

仿射变换与群组图谱: 模板以及每个被试的映射
"""


from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from src.infrastructure.errors import GeometryError
from src.infrastructure.fieldcore import GridGeometry, ScalarVolume
from .diffeo_field import DiffeoField


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """
    x -> matrix @ x + translation (mm)
    """

    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64).reshape(3, 3)
        translation = np.array(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(matrix)) <= 1e-9:
            raise GeometryError(f"Affine matrix is not invertible: det = {np.linalg.det(matrix):.3e}")
        matrix.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls()

    @classmethod
    def from_homogeneous(cls, homogeneous: np.ndarray) -> "AffineTransform":
        homogeneous = np.asarray(homogeneous, dtype=np.float64)
        return cls(homogeneous[:3, :3], homogeneous[:3, 3])

    def homogeneous(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.matrix
        out[:3, 3] = self.translation
        return out

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.matrix.T + self.translation

    def inverse(self) -> "AffineTransform":
        return AffineTransform.from_homogeneous(np.linalg.inv(self.homogeneous()))

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """
        self after inner
        """
        return AffineTransform.from_homogeneous(self.homogeneous() @ inner.homogeneous())

    def displacement(self, geometry: GridGeometry) -> np.ndarray:
        points = geometry.grid_points()
        return self.apply(points) - points

    def to_dict(self) -> Dict[str, List]:
        return {"matrix": self.matrix.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True, eq=False)
class Atlas:
    """
    Template at the reference frame with, per subject, forward = phi_i (subject -> atlas)
    and inverse = phi_i^-1 (atlas -> subject)
    """

    template: ScalarVolume
    mappings: Dict[str, DiffeoField]
    affines: Dict[str, AffineTransform] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for subject_id, mapping in self.mappings.items():
            self.template.geometry.check_same(mapping.geometry, f"template and mapping of {subject_id}")

    @property
    def geometry(self) -> GridGeometry:
        return self.template.geometry

    @property
    def subject_ids(self) -> List[str]:
        return list(self.mappings.keys())

    def mean_inverse_rms(self) -> float:
        """
        RMS over the grid of the mean atlas -> subject displacement, in voxels
        """
        mean = np.mean([m.inverse.vectors for m in self.mappings.values()], axis=0)
        mean = mean / np.asarray(self.geometry.spacing)
        return float(np.sqrt(np.mean(np.sum(mean ** 2, axis=-1))))


__all__ = ["AffineTransform", "Atlas"]
