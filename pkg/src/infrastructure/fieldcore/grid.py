"""
# src/infrastructure/fieldcore/grid.py

Regular-grid geometry and the immutable scalar / vector / mask field containers

规则网格几何与不可变的标量场, 向量场, 掩膜容器
"""


from __future__ import annotations
from dataclasses import dataclass, field
from typing import Tuple, Union
import logging

import numpy as np

from src.infrastructure.errors import GeometryError, ShapeMismatchError


logger = logging.getLogger(__name__)

Triple = Tuple[float, float, float]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class GridGeometry:
    """
    Axis-aligned regular grid: world = origin + index * spacing (mm)
    """

    dims: Tuple[int, int, int]
    spacing: Triple
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise GeometryError(f"Geometry needs three dims/spacings/origins, got {self.dims}, {self.spacing}, {self.origin}")
        if min(dims) < 2:
            raise GeometryError(f"All dims must be >= 2, got {dims}")
        if not all(np.isfinite(s) and s > 0 for s in spacing):
            raise GeometryError(f"All spacings must be > 0, got {spacing}")
        if not all(np.isfinite(o) for o in origin):
            raise GeometryError(f"Origin must be finite, got {origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, dims: Tuple[int, int, int], spacing: Triple) -> "GridGeometry":
        """
        Grid whose geometric center sits at the world origin
        """
        origin = tuple(-0.5 * (int(n) - 1) * float(s) for n, s in zip(dims, spacing))
        return cls(dims=dims, spacing=spacing, origin=origin)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.dims

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    @property
    def mean_spacing(self) -> float:
        return float(np.mean(self.spacing))

    @property
    def min_spacing(self) -> float:
        return float(np.min(self.spacing))

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + 0.5 * (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    @property
    def affine(self) -> np.ndarray:
        """
        4x4 voxel-to-world matrix
        """
        out = np.diag(list(self.spacing) + [1.0])
        out[:3, 3] = self.origin
        return out

    def voxel_to_world(self, index: np.ndarray) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(index, dtype=np.float64) * np.asarray(self.spacing)

    def world_to_voxel(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.origin)) / np.asarray(self.spacing)

    def grid_points(self) -> np.ndarray:
        """
        World coordinates of every voxel center, shape (nx, ny, nz, 3)
        """
        axes = [o + s * np.arange(n) for n, s, o in zip(self.dims, self.spacing, self.origin)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def check_same(self, other: "GridGeometry", what: str = "inputs") -> None:
        """
        Raise ShapeMismatchError unless both geometries agree
        """
        if self.dims != other.dims or not np.allclose(self.spacing, other.spacing) or not np.allclose(self.origin, other.origin):
            logger.error(f"Geometry mismatch between {what}: {self} vs {other}")
            raise ShapeMismatchError(f"Geometry mismatch between {what}: {self} vs {other}")


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    """
    One real value per voxel
    """

    geometry: GridGeometry
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = _frozen(self.values)
        if values.shape != self.geometry.shape:
            raise GeometryError(f"Scalar volume shape {values.shape} does not match dims {self.geometry.dims}")
        if not np.all(np.isfinite(values)):
            raise GeometryError("Scalar volume holds non-finite values")
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "ScalarVolume":
        return ScalarVolume(self.geometry, values)


@dataclass(frozen=True, eq=False)
class VectorVolume:
    """
    Three real components per voxel (mm, world frame), shape (nx, ny, nz, 3)
    """

    geometry: GridGeometry
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vectors = _frozen(self.vectors)
        if vectors.shape != self.geometry.shape + (3,):
            raise GeometryError(f"Vector volume shape {vectors.shape} does not match dims {self.geometry.dims} x 3")
        if not np.all(np.isfinite(vectors)):
            raise GeometryError("Vector volume holds non-finite values")
        object.__setattr__(self, "vectors", vectors)

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> "VectorVolume":
        return cls(geometry, np.zeros(geometry.shape + (3,)))

    def with_vectors(self, vectors: np.ndarray) -> "VectorVolume":
        return VectorVolume(self.geometry, vectors)

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=-1)


@dataclass(frozen=True, eq=False)
class RegionMask:
    """
    Voxel weights in [0, 1]; binary masks use exactly {0, 1}
    """

    geometry: GridGeometry
    weights: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        weights = _frozen(self.weights)
        if weights.shape != self.geometry.shape:
            raise GeometryError(f"Mask shape {weights.shape} does not match dims {self.geometry.dims}")
        if not np.all(np.isfinite(weights)) or weights.min(initial=0.0) < 0.0 or weights.max(initial=0.0) > 1.0:
            raise GeometryError("Mask weights must lie in [0, 1]")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def full(cls, geometry: GridGeometry, value: float = 1.0) -> "RegionMask":
        return cls(geometry, np.full(geometry.shape, float(value)))

    @classmethod
    def from_bool(cls, geometry: GridGeometry, selected: np.ndarray) -> "RegionMask":
        return cls(geometry, np.asarray(selected, dtype=bool).astype(np.float64))

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.weights == 0.0) | (self.weights == 1.0)))

    def as_bool(self) -> np.ndarray:
        return self.weights > 0.5


Volume = Union[ScalarVolume, VectorVolume]


__all__ = ["GridGeometry", "ScalarVolume", "VectorVolume", "RegionMask", "Volume"]
