"""
# src/infrastructure/fieldcore/interpolation.py

Trilinear pull-back sampling with clamp-to-edge, warping, displacement composition and inversion

带边界钳制的三线性采样, 图像变形, 位移场复合与求逆
"""


from __future__ import annotations
from typing import Optional, Union
import logging

import numpy as np
from scipy import ndimage

from .grid import GridGeometry, ScalarVolume, VectorVolume


logger = logging.getLogger(__name__)


def _clamped_coordinates(geometry: GridGeometry, points: np.ndarray) -> np.ndarray:
    voxel = geometry.world_to_voxel(points)
    upper = np.asarray(geometry.dims, dtype=np.float64) - 1.0
    voxel = np.clip(voxel, 0.0, upper)
    # map_coordinates wants (3, ...) ordering
    return np.moveaxis(voxel, -1, 0)


def sample_array(values: np.ndarray, geometry: GridGeometry, points: np.ndarray) -> np.ndarray:
    """
    Sample a scalar array (nx, ny, nz) or vector array (nx, ny, nz, k) at world points

    params
    ------
    values: np.ndarray - field samples laid out on geometry
    geometry: GridGeometry - grid the samples live on
    points: np.ndarray - world points, shape (..., 3)

    return
    ------
    np.ndarray - shape points.shape[:-1] (scalar) or points.shape[:-1] + (k,) (vector)
    """
    points = np.asarray(points, dtype=np.float64)
    coords = _clamped_coordinates(geometry, points)
    if values.ndim == 3:
        return ndimage.map_coordinates(values, coords, order=1, mode="nearest")
    return np.stack(
        [ndimage.map_coordinates(values[..., c], coords, order=1, mode="nearest") for c in range(values.shape[-1])],
        axis=-1,
    )


def interpolate(volume: Union[ScalarVolume, VectorVolume], points: np.ndarray) -> Union[float, np.ndarray]:
    """
    Trilinear interpolation of a volume at world point(s); outside the grid the nearest boundary voxel is used
    """
    points = np.asarray(points, dtype=np.float64)
    values = volume.values if isinstance(volume, ScalarVolume) else volume.vectors
    single = points.ndim == 1
    out = sample_array(values, volume.geometry, points.reshape(1, 3) if single else points)
    if single:
        return float(out[0]) if isinstance(volume, ScalarVolume) else out[0]
    return out


def warp_array(values: np.ndarray, geometry: GridGeometry, displacement: np.ndarray) -> np.ndarray:
    """
    Pull-back: out(x) = values(x + displacement(x))
    """
    return sample_array(values, geometry, geometry.grid_points() + displacement)


def warp(volume: ScalarVolume, displacement: VectorVolume) -> ScalarVolume:
    volume.geometry.check_same(displacement.geometry, "volume and displacement")
    return volume.with_values(warp_array(volume.values, volume.geometry, displacement.vectors))


def compose_arrays(outer: np.ndarray, inner: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """
    Displacement of (x + outer) ∘ (x + inner): inner(x) + outer(x + inner(x))
    """
    return inner + warp_array(outer, geometry, inner)


def compose(outer: VectorVolume, inner: VectorVolume) -> VectorVolume:
    outer.geometry.check_same(inner.geometry, "composed displacements")
    return inner.with_vectors(compose_arrays(outer.vectors, inner.vectors, inner.geometry))


def invert_array(
    displacement: np.ndarray,
    geometry: GridGeometry,
    iterations: int = 30,
    initial: Optional[np.ndarray] = None,
    tolerance: float = 1e-6,
) -> np.ndarray:
    """
    Fixed-point inversion: w(x) = -u(x + w(x))

    params
    ------
    displacement: np.ndarray - forward displacement u, shape (nx, ny, nz, 3)
    geometry: GridGeometry - grid of u
    iterations: int - maximum fixed-point sweeps
    initial: Optional[np.ndarray] - starting guess, -u when absent
    tolerance: float - stop when the max update falls below tolerance * min spacing

    return
    ------
    np.ndarray - displacement of the inverse map on the same grid
    """
    inverse = -displacement if initial is None else np.array(initial, dtype=np.float64)
    points = geometry.grid_points()
    change = float("inf")
    for _ in range(iterations):
        updated = -sample_array(displacement, geometry, points + inverse)
        change = float(np.max(np.abs(updated - inverse), initial=0.0))
        inverse = updated
        if change < tolerance * geometry.min_spacing:
            break
    else:
        logger.debug(f"Displacement inversion stopped after {iterations} sweeps, last change {change:.3e} mm")
    return inverse


def invert(displacement: VectorVolume, iterations: int = 30) -> VectorVolume:
    return displacement.with_vectors(invert_array(displacement.vectors, displacement.geometry, iterations))


def resample_array(values: np.ndarray, source: GridGeometry, target: GridGeometry) -> np.ndarray:
    """
    Pull a field from source onto the voxel centers of target
    """
    return sample_array(values, source, target.grid_points())


def resample(volume: Union[ScalarVolume, VectorVolume], target: GridGeometry) -> Union[ScalarVolume, VectorVolume]:
    if isinstance(volume, ScalarVolume):
        return ScalarVolume(target, resample_array(volume.values, volume.geometry, target))
    return VectorVolume(target, resample_array(volume.vectors, volume.geometry, target))


__all__ = [
    "sample_array",
    "interpolate",
    "warp_array",
    "warp",
    "compose_arrays",
    "compose",
    "invert_array",
    "invert",
    "resample_array",
    "resample",
]
