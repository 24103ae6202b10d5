"""
# src/infrastructure/fieldcore/differential.py

Finite-difference operators on regular grids: central differences inside, one-sided at the boundary

规则网格上的有限差分算子: 内部中心差分, 边界单侧差分
"""


from __future__ import annotations
import logging

import numpy as np

from .grid import GridGeometry, ScalarVolume, VectorVolume


logger = logging.getLogger(__name__)


def gradient_array(values: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """
    Spatial gradient of a scalar array in value/mm, shape (nx, ny, nz, 3)
    """
    return np.stack(np.gradient(values, *geometry.spacing, edge_order=1), axis=-1)


def jacobian_array(vectors: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """
    J[..., r, c] = d u_r / d x_c
    """
    return np.stack([gradient_array(vectors[..., r], geometry) for r in range(vectors.shape[-1])], axis=-2)


def divergence_array(vectors: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    return sum(np.gradient(vectors[..., c], geometry.spacing[c], axis=c, edge_order=1) for c in range(3))


def gradient(volume: ScalarVolume) -> VectorVolume:
    return VectorVolume(volume.geometry, gradient_array(volume.values, volume.geometry))


def jacobian(field: VectorVolume) -> np.ndarray:
    """
    Per-voxel 3x3 Jacobian of a displacement field

    params
    ------
    field: VectorVolume - displacement u (mm)

    return
    ------
    np.ndarray - shape (nx, ny, nz, 3, 3), rows are component gradients
    """
    return jacobian_array(field.vectors, field.geometry)


def divergence(field: VectorVolume) -> ScalarVolume:
    return ScalarVolume(field.geometry, divergence_array(field.vectors, field.geometry))


def jacobian_determinant(field: VectorVolume) -> np.ndarray:
    """
    det(I + du/dx) at every voxel
    """
    return np.linalg.det(np.eye(3) + jacobian(field))


def interior_mask(dims, layers: int = 1) -> np.ndarray:
    """
    Boolean mask dropping the outermost voxel layers, where the one-sided stencil applies
    """
    inner = np.zeros(tuple(dims), dtype=bool)
    inner[layers:-layers, layers:-layers, layers:-layers] = True
    return inner


__all__ = [
    "gradient_array",
    "jacobian_array",
    "divergence_array",
    "gradient",
    "jacobian",
    "divergence",
    "jacobian_determinant",
    "interior_mask",
]
