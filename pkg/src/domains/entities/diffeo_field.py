"""
# src/domains/entities/diffeo_field.py

Displacement-represented diffeomorphism with its inverse, and the HARP phase / magnitude pair

以位移场表示的微分同胚及其逆, 以及 HARP 相位 / 幅值对
"""


from __future__ import annotations
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.infrastructure.fieldcore import (
    GridGeometry,
    ScalarVolume,
    VectorVolume,
    compose_arrays,
    jacobian_array,
)


@dataclass(frozen=True, eq=False)
class DiffeoField:
    """
    phi(x) = x + forward(x) and phi^-1(x) = x + inverse(x), both sampled on one grid
    """

    forward: VectorVolume
    inverse: VectorVolume

    def __post_init__(self) -> None:
        self.forward.geometry.check_same(self.inverse.geometry, "forward and inverse displacements")

    @classmethod
    def identity(cls, geometry: GridGeometry) -> "DiffeoField":
        zero = VectorVolume.zeros(geometry)
        return cls(zero, zero)

    @property
    def geometry(self) -> GridGeometry:
        return self.forward.geometry

    def inverted(self) -> "DiffeoField":
        return DiffeoField(self.inverse, self.forward)

    def inverse_consistency(self, mask: Optional[np.ndarray] = None) -> float:
        """
        RMS of |phi(phi^-1(x)) - x| in voxels, optionally restricted to a boolean mask
        """
        residual = compose_arrays(self.forward.vectors, self.inverse.vectors, self.geometry)
        residual = residual / np.asarray(self.geometry.spacing)
        squared = np.sum(residual ** 2, axis=-1)
        if mask is not None:
            squared = squared[np.asarray(mask, dtype=bool)]
        return float(np.sqrt(np.mean(squared))) if squared.size else 0.0

    def jacobian_determinant(self) -> np.ndarray:
        return np.linalg.det(np.eye(3) + jacobian_array(self.forward.vectors, self.geometry))


@dataclass(frozen=True, eq=False)
class PhasePair:
    """
    Wrapped harmonic phase in [-pi, pi) with its nonnegative magnitude
    """

    phase: ScalarVolume
    magnitude: ScalarVolume

    def __post_init__(self) -> None:
        self.phase.geometry.check_same(self.magnitude.geometry, "phase and magnitude")
        if self.phase.values.min() < -np.pi or self.phase.values.max() >= np.pi:
            raise ValueError("Phase values must lie in [-pi, pi)")
        if self.magnitude.values.min() < 0:
            raise ValueError("Magnitude values must be nonnegative")

    @property
    def geometry(self) -> GridGeometry:
        return self.phase.geometry


__all__ = ["DiffeoField", "PhasePair"]
