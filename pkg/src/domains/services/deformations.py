"""
# src/domains/services/deformations.py

Closed-form deformation kinds with forward map, inverse map and Jacobian, selected by name

具有解析正向映射, 逆映射与雅可比矩阵的形变类型, 按名称注册与创建
"""


from __future__ import annotations
from abc import ABC, abstractmethod
from typing import Optional, Sequence, Tuple
import copy
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from src.config import DeformationSpec
from src.infrastructure.base_registries import LMAStandard
from src.infrastructure.errors import PhantomSpecError
from src.infrastructure.fieldcore import GridGeometry


logger = logging.getLogger(__name__)


def _vector(value, name: str) -> np.ndarray:
    out = np.asarray(value, dtype=np.float64).reshape(-1)
    if out.shape != (3,) or not np.all(np.isfinite(out)):
        raise PhantomSpecError(f"Parameter *{name}* must be three finite numbers, got {value}")
    return out


class AnalyticDeformation(LMAStandard, ABC):
    """
    A family of maps x -> phi_s(x) scaled by an amplitude s; s = 0 is the identity.

    ``schedule`` gives the amplitude of every time frame, frame 0 is the reference.
    """

    kind: str = ""
    incompressible: bool = True

    def __init__(self, schedule: Optional[Sequence[float]] = None) -> None:
        self.schedule: Tuple[float, ...] = tuple(float(s) for s in schedule) if schedule is not None else (0.0, 1.0)

    @abstractmethod
    def forward(self, points: np.ndarray, s: float = 1.0) -> np.ndarray:
        ...

    @abstractmethod
    def inverse(self, points: np.ndarray, s: float = 1.0) -> np.ndarray:
        ...

    @abstractmethod
    def jacobian(self, points: np.ndarray, s: float = 1.0) -> np.ndarray:
        """
        d forward / d points, shape points.shape[:-1] + (3, 3)
        """

    def with_schedule(self, schedule: Sequence[float]) -> "AnalyticDeformation":
        clone = copy.copy(self)
        clone.schedule = tuple(float(s) for s in schedule)
        return clone

    @property
    def frames(self) -> int:
        return len(self.schedule)

    def amplitude(self, t: int) -> float:
        if not 0 <= t < len(self.schedule):
            raise PhantomSpecError(f"Frame {t} outside the amplitude schedule of {len(self.schedule)} frames")
        return self.schedule[t]

    def displacement(self, geometry: GridGeometry, s: float = 1.0) -> np.ndarray:
        points = geometry.grid_points()
        return self.forward(points, s) - points


@AnalyticDeformation.register("translation")
class Translation(AnalyticDeformation):
    def __init__(self, offset=(0.0, 0.0, 0.0), schedule=None) -> None:
        super().__init__(schedule)
        self.offset = _vector(offset, "offset")

    def forward(self, points, s=1.0):
        return np.asarray(points, dtype=np.float64) + s * self.offset

    def inverse(self, points, s=1.0):
        return np.asarray(points, dtype=np.float64) - s * self.offset

    def jacobian(self, points, s=1.0):
        return np.broadcast_to(np.eye(3), np.shape(points)[:-1] + (3, 3)).copy()


@AnalyticDeformation.register("rigid-rotation")
class RigidRotation(AnalyticDeformation):
    def __init__(self, axis=(0.0, 0.0, 1.0), angle_deg: float = 0.0, center=(0.0, 0.0, 0.0), schedule=None) -> None:
        super().__init__(schedule)
        axis = _vector(axis, "axis")
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise PhantomSpecError("Rotation axis must be nonzero")
        self.axis = axis / norm
        self.angle = np.deg2rad(float(angle_deg))
        self.center = _vector(center, "center")

    def _matrix(self, s: float) -> np.ndarray:
        return Rotation.from_rotvec(self.axis * self.angle * s).as_matrix()

    def forward(self, points, s=1.0):
        return (np.asarray(points, dtype=np.float64) - self.center) @ self._matrix(s).T + self.center

    def inverse(self, points, s=1.0):
        return (np.asarray(points, dtype=np.float64) - self.center) @ self._matrix(s) + self.center

    def jacobian(self, points, s=1.0):
        return np.broadcast_to(self._matrix(s), np.shape(points)[:-1] + (3, 3)).copy()


@AnalyticDeformation.register("incompressible-shear")
class IncompressibleShear(AnalyticDeformation):
    """
    x_a += s * gamma * (x_b - c_b), a != b
    """

    def __init__(self, gamma: float = 0.0, shear_axis: int = 0, gradient_axis: int = 1, center=(0.0, 0.0, 0.0), schedule=None) -> None:
        super().__init__(schedule)
        if shear_axis == gradient_axis or {shear_axis, gradient_axis} - {0, 1, 2}:
            raise PhantomSpecError(f"Shear needs two distinct axes in 0..2, got {shear_axis}, {gradient_axis}")
        self.gamma = float(gamma)
        self.a, self.b = int(shear_axis), int(gradient_axis)
        self.center = _vector(center, "center")

    def _shift(self, points, s):
        out = np.array(points, dtype=np.float64, copy=True)
        return out, s * self.gamma * (out[..., self.b] - self.center[self.b])

    def forward(self, points, s=1.0):
        out, shift = self._shift(points, s)
        out[..., self.a] += shift
        return out

    def inverse(self, points, s=1.0):
        out, shift = self._shift(points, s)
        out[..., self.a] -= shift
        return out

    def jacobian(self, points, s=1.0):
        matrix = np.eye(3)
        matrix[self.a, self.b] = s * self.gamma
        return np.broadcast_to(matrix, np.shape(points)[:-1] + (3, 3)).copy()


@AnalyticDeformation.register("divergence-free-swirl")
class DivergenceFreeSwirl(AnalyticDeformation):
    """
    Rotation about ``axis`` through ``center`` by an angle that decays with the in-plane
    radius r and the axial offset z:

        theta(r, z) = s * theta0 * exp(-r^2 / 2 w^2) * exp(-z^2 / 2 h^2)

    r and z are preserved, so the inverse rotates by -theta and det F = 1 exactly.
    """

    def __init__(self, angle_deg: float = 0.0, width_mm: float = 10.0, height_mm: Optional[float] = None,
                 center=(0.0, 0.0, 0.0), axis: int = 2, schedule=None) -> None:
        super().__init__(schedule)
        if width_mm <= 0 or (height_mm is not None and height_mm <= 0):
            raise PhantomSpecError(f"Swirl width/height must be positive, got {width_mm}, {height_mm}")
        if axis not in (0, 1, 2):
            raise PhantomSpecError(f"Swirl axis must be 0, 1 or 2, got {axis}")
        self.theta0 = np.deg2rad(float(angle_deg))
        self.width = float(width_mm)
        self.height = float(height_mm) if height_mm is not None else float(width_mm)
        self.center = _vector(center, "center")
        self.axis = int(axis)
        # right-handed in-plane pair for the axis
        self.i, self.j = {0: (1, 2), 1: (2, 0), 2: (0, 1)}[self.axis]

    def _angle(self, p_i, p_j, z, s):
        r_sq = p_i ** 2 + p_j ** 2
        return s * self.theta0 * np.exp(-r_sq / (2 * self.width ** 2)) * np.exp(-z ** 2 / (2 * self.height ** 2))

    def _rotate(self, points, s, sign):
        points = np.asarray(points, dtype=np.float64)
        p_i = points[..., self.i] - self.center[self.i]
        p_j = points[..., self.j] - self.center[self.j]
        z = points[..., self.axis] - self.center[self.axis]
        theta = sign * self._angle(p_i, p_j, z, s)
        out = points.copy()
        out[..., self.i] = self.center[self.i] + np.cos(theta) * p_i - np.sin(theta) * p_j
        out[..., self.j] = self.center[self.j] + np.sin(theta) * p_i + np.cos(theta) * p_j
        return out

    def forward(self, points, s=1.0):
        return self._rotate(points, s, 1.0)

    def inverse(self, points, s=1.0):
        return self._rotate(points, s, -1.0)

    def jacobian(self, points, s=1.0):
        points = np.asarray(points, dtype=np.float64)
        p_i = points[..., self.i] - self.center[self.i]
        p_j = points[..., self.j] - self.center[self.j]
        z = points[..., self.axis] - self.center[self.axis]
        theta = self._angle(p_i, p_j, z, s)
        c, sn = np.cos(theta), np.sin(theta)
        # d q / d theta
        dq_i = -sn * p_i - c * p_j
        dq_j = c * p_i - sn * p_j
        g_i = -theta * p_i / self.width ** 2
        g_j = -theta * p_j / self.width ** 2
        g_z = -theta * z / self.height ** 2

        out = np.zeros(points.shape[:-1] + (3, 3))
        out[..., self.i, self.i] = c + dq_i * g_i
        out[..., self.i, self.j] = -sn + dq_i * g_j
        out[..., self.j, self.i] = sn + dq_j * g_i
        out[..., self.j, self.j] = c + dq_j * g_j
        out[..., self.i, self.axis] = dq_i * g_z
        out[..., self.j, self.axis] = dq_j * g_z
        out[..., self.axis, self.axis] = 1.0
        return out


@AnalyticDeformation.register("affine")
class AffineDeformation(AnalyticDeformation):
    """
    x -> c + (I + s (A - I)) (x - c) + s t; volume changes with det A
    """

    incompressible = False

    def __init__(self, matrix=None, translation=(0.0, 0.0, 0.0), center=(0.0, 0.0, 0.0), schedule=None) -> None:
        super().__init__(schedule)
        matrix = np.eye(3) if matrix is None else np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (3, 3) or abs(np.linalg.det(matrix)) <= 1e-9:
            raise PhantomSpecError(f"Affine matrix must be an invertible 3x3, got {matrix.tolist()}")
        self.matrix = matrix
        self.translation = _vector(translation, "translation")
        self.center = _vector(center, "center")

    def _linear(self, s):
        return np.eye(3) + s * (self.matrix - np.eye(3))

    def forward(self, points, s=1.0):
        return (np.asarray(points, dtype=np.float64) - self.center) @ self._linear(s).T + self.center + s * self.translation

    def inverse(self, points, s=1.0):
        shifted = np.asarray(points, dtype=np.float64) - self.center - s * self.translation
        return shifted @ np.linalg.inv(self._linear(s)).T + self.center

    def jacobian(self, points, s=1.0):
        return np.broadcast_to(self._linear(s), np.shape(points)[:-1] + (3, 3)).copy()


@AnalyticDeformation.register("composed")
class ComposedDeformation(AnalyticDeformation):
    """
    parts[0] applied first; every part receives the same amplitude
    """

    def __init__(self, parts: Sequence[AnalyticDeformation] = (), schedule=None) -> None:
        super().__init__(schedule)
        if not parts:
            raise PhantomSpecError("A composed deformation needs at least one part")
        self.parts = list(parts)
        self.incompressible = all(p.incompressible for p in self.parts)

    def forward(self, points, s=1.0):
        for part in self.parts:
            points = part.forward(points, s)
        return points

    def inverse(self, points, s=1.0):
        for part in reversed(self.parts):
            points = part.inverse(points, s)
        return points

    def jacobian(self, points, s=1.0):
        total = np.broadcast_to(np.eye(3), np.shape(points)[:-1] + (3, 3)).copy()
        for part in self.parts:
            total = part.jacobian(points, s) @ total
            points = part.forward(points, s)
        return total


class ConjugatedDeformation(AnalyticDeformation):
    """
    shape o motion o shape^-1: a base-anatomy motion expressed in a subject's anatomy.
    The static shape is applied at full amplitude.
    """

    def __init__(self, motion: AnalyticDeformation, shape: AnalyticDeformation) -> None:
        super().__init__(motion.schedule)
        self.motion = motion
        self.shape = shape
        self.incompressible = motion.incompressible
        self.kind = "conjugated"

    def forward(self, points, s=1.0):
        return self.shape.forward(self.motion.forward(self.shape.inverse(points), s))

    def inverse(self, points, s=1.0):
        return self.shape.forward(self.motion.inverse(self.shape.inverse(points), s))

    def jacobian(self, points, s=1.0):
        base = self.shape.inverse(points)
        moved = self.motion.forward(base, s)
        return self.shape.jacobian(moved) @ self.motion.jacobian(base, s) @ np.linalg.inv(self.shape.jacobian(base))


class ScaledDeformation(AnalyticDeformation):
    """
    Same map family with every amplitude multiplied by ``factor``
    """

    def __init__(self, inner: AnalyticDeformation, factor: float) -> None:
        super().__init__(inner.schedule)
        self.inner = inner
        self.factor = float(factor)
        self.incompressible = inner.incompressible
        self.kind = inner.kind

    def forward(self, points, s=1.0):
        return self.inner.forward(points, s * self.factor)

    def inverse(self, points, s=1.0):
        return self.inner.inverse(points, s * self.factor)

    def jacobian(self, points, s=1.0):
        return self.inner.jacobian(points, s * self.factor)


def build_deformation(spec: DeformationSpec, schedule: Optional[Sequence[float]] = None) -> AnalyticDeformation:
    """
    Instantiate a deformation from its JSON description

    params
    ------
    spec: DeformationSpec - kind name, parameters and, for "composed", the parts
    schedule: Optional[Sequence[float]] - amplitude per frame

    return
    ------
    AnalyticDeformation - the registered kind, carrying the schedule
    """
    try:
        if spec.kind == "composed":
            parts = [build_deformation(part) for part in spec.parts]
            return AnalyticDeformation.create("composed", parts=parts, schedule=schedule)
        return AnalyticDeformation.create(spec.kind, schedule=schedule, **spec.params)
    except PhantomSpecError:
        raise
    except (TypeError, ValueError) as exc:
        logger.error(f"Invalid deformation {spec.kind}: {exc}")
        raise PhantomSpecError(f"Invalid deformation *{spec.kind}*. Details: {exc}") from exc


__all__ = [
    "AnalyticDeformation",
    "Translation",
    "RigidRotation",
    "IncompressibleShear",
    "DivergenceFreeSwirl",
    "AffineDeformation",
    "ComposedDeformation",
    "ConjugatedDeformation",
    "ScaledDeformation",
    "build_deformation",
]
