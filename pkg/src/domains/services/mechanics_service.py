"""
# src/domains/services/mechanics_service.py

Lagrangian strain, closed-form principal strains and region statistics of displacement fields

位移场的拉格朗日应变, 闭式主应变以及区域统计
"""


from __future__ import annotations
from typing import Optional, Tuple
import logging

import numpy as np

from src.config import CONFIG
from src.domains.entities import RegionStats, StrainField
from src.infrastructure.errors import RegionError
from src.infrastructure.fieldcore import RegionMask, VectorVolume, interior_mask, jacobian_array


logger = logging.getLogger(__name__)


### EIGEN SOLVER

def symmetric_eigenvalues(tensor: np.ndarray) -> np.ndarray:
    """
    Closed-form eigenvalues of stacked symmetric 3x3 matrices, sorted E1 >= E2 >= E3

    params
    ------
    tensor: np.ndarray - (..., 3, 3)

    return
    ------
    np.ndarray - (..., 3)
    """
    a = tensor
    p1 = a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2
    q = np.trace(a, axis1=-2, axis2=-1) / 3.0
    p2 = (a[..., 0, 0] - q) ** 2 + (a[..., 1, 1] - q) ** 2 + (a[..., 2, 2] - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)

    b = (a - q[..., None, None] * np.eye(3)) / safe[..., None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    values = np.stack([e1, e2, e3], axis=-1)
    # p == 0: a multiple of the identity
    values = np.where((p > 0)[..., None], values, q[..., None])
    return -np.sort(-values, axis=-1)


def _normalize(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(v, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    return v / safe[..., None], norm


def _null_vector(m: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """
    Unit vector spanning the null space of rank-2 matrices, largest row cross product
    """
    r0, r1, r2 = m[..., 0, :], m[..., 1, :], m[..., 2, :]
    candidates = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=-2)
    norms = np.linalg.norm(candidates, axis=-1)
    best = np.argmax(norms, axis=-1)
    chosen = np.take_along_axis(candidates, best[..., None, None], axis=-2)[..., 0, :]
    chosen, norm = _normalize(chosen)
    scale = np.max(np.abs(m), axis=(-2, -1))
    degenerate = norm <= 1e-14 * np.maximum(scale ** 2, 1e-300)
    return np.where(degenerate[..., None], fallback, chosen)


def _complement_basis(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    axis = np.argmin(np.abs(v), axis=-1)
    helper = np.eye(3)[axis]
    u, _ = _normalize(np.cross(v, helper))
    w = np.cross(v, u)
    return u, w


def _in_plane_vector(a: np.ndarray, value: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Eigenvector of a for value inside span(u, w)
    """
    m = a - value[..., None, None] * np.eye(3)
    mu = np.einsum("...ij,...j->...i", m, u)
    mw = np.einsum("...ij,...j->...i", m, w)
    m00 = np.einsum("...i,...i->...", u, mu)
    m01 = np.einsum("...i,...i->...", u, mw)
    m11 = np.einsum("...i,...i->...", w, mw)

    first_row = np.hypot(m00, m01) >= np.hypot(m01, m11)
    x0 = np.where(first_row, -m01, -m11)
    x1 = np.where(first_row, m00, m01)
    length = np.hypot(x0, x1)
    scale = np.maximum(np.abs(m00), np.maximum(np.abs(m01), np.abs(m11)))
    degenerate = length <= 1e-14 * np.maximum(scale, 1e-300)
    safe = np.where(degenerate, 1.0, length)
    x0 = np.where(degenerate, 1.0, x0 / safe)
    x1 = np.where(degenerate, 0.0, x1 / safe)
    return x0[..., None] * u + x1[..., None] * w


def _sign_convention(vectors: np.ndarray) -> np.ndarray:
    index = np.argmax(np.abs(vectors), axis=-1)
    pivot = np.take_along_axis(vectors, index[..., None], axis=-1)
    return np.where(pivot < 0, -vectors, vectors)


def symmetric_eigensystem(tensor: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed-form eigen-decomposition of stacked symmetric 3x3 matrices

    The best separated extreme eigenvalue gets its vector from the null space of
    (A - lambda I); the middle one is solved in the orthogonal plane; the last is the
    cross product. Each vector has its largest-magnitude component positive.

    params
    ------
    tensor: np.ndarray - (..., 3, 3) symmetric

    return
    ------
    Tuple[np.ndarray, np.ndarray] - eigenvalues (..., 3) descending, eigenvectors (..., 3, 3)
    with column k the unit vector of eigenvalue k
    """
    values = symmetric_eigenvalues(tensor)
    e1, e2, e3 = values[..., 0], values[..., 1], values[..., 2]
    top_first = (e1 - e2) >= (e2 - e3)
    extreme = np.where(top_first, e1, e3)

    fallback = np.broadcast_to(np.where(top_first[..., None], np.eye(3)[0], np.eye(3)[2]), values.shape)
    v_extreme = _null_vector(tensor - extreme[..., None, None] * np.eye(3), fallback)
    u, w = _complement_basis(v_extreme)
    v_middle = _in_plane_vector(tensor, e2, u, w)
    v_last = np.cross(v_extreme, v_middle)

    v1 = np.where(top_first[..., None], v_extreme, v_last)
    v3 = np.where(top_first[..., None], v_last, v_extreme)
    vectors = np.stack([_sign_convention(v) for v in (v1, v_middle, v3)], axis=-1)
    return values, vectors


### STRAIN

def deformation_gradient(u: VectorVolume) -> np.ndarray:
    return np.eye(3) + jacobian_array(u.vectors, u.geometry)


def strain(u: VectorVolume) -> StrainField:
    """
    E = 1/2 (F^T F - I) with F = I + du/dX by central differences
    """
    f = deformation_gradient(u)
    tensor = 0.5 * (np.einsum("...ki,...kj->...ij", f, f) - np.eye(3))
    tensor = 0.5 * (tensor + np.swapaxes(tensor, -1, -2))
    values, vectors = symmetric_eigensystem(tensor)
    return StrainField(u.geometry, tensor, values, vectors)


def rigid_invariance_check(u_rigid: VectorVolume) -> float:
    """
    Maximum Frobenius norm of E over interior voxels
    """
    tensor = strain(u_rigid).tensor
    interior = interior_mask(u_rigid.geometry.dims, 1)
    norms = np.sqrt(np.sum(tensor ** 2, axis=(-2, -1)))
    return float(norms[interior].max()) if interior.any() else 0.0


### REGION STATISTICS

def region_weights(region: RegionMask, mode: str = CONFIG["MECHANICS_REGION_MODE"]) -> np.ndarray:
    """
    B_S as the tissue weights ("mask") or as the axis-aligned box around them ("bbox")
    """
    if mode == "mask":
        return np.asarray(region.weights, dtype=np.float64)
    if mode == "bbox":
        selected = region.weights > 0
        out = np.zeros(region.geometry.shape)
        if selected.any():
            bounds = [np.flatnonzero(selected.any(axis=tuple(a for a in range(3) if a != axis))) for axis in range(3)]
            out[bounds[0][0]:bounds[0][-1] + 1, bounds[1][0]:bounds[1][-1] + 1, bounds[2][0]:bounds[2][-1] + 1] = 1.0
        return out
    raise RegionError(f"Unknown region mode '{mode}', expected 'mask' or 'bbox'")


def mean_deformation(u: VectorVolume, region: RegionMask, mode: str = CONFIG["MECHANICS_REGION_MODE"]) -> float:
    """
    MD = sum |u| B / sum B

    params
    ------
    u: VectorVolume - displacement in mm
    region: RegionMask - B_S, defined in the reference frame
    mode: str - "mask" or "bbox"

    return
    ------
    float - mm
    """
    u.geometry.check_same(region.geometry, "displacement and region")
    weights = region_weights(region, mode)
    total = float(weights.sum())
    if total <= 0:
        logger.error("Mean deformation over an empty region")
        raise RegionError("Mean deformation needs a nonempty region")
    return float(np.sum(u.norm() * weights) / total)


def mean_log_jacobian(u: VectorVolume, region: RegionMask) -> float:
    """
    Mean of log det F over the region; zero for volume-preserving motion
    """
    det = np.linalg.det(deformation_gradient(u))
    selected = region.as_bool() & interior_mask(u.geometry.dims, 1)
    if not selected.any():
        raise RegionError("Mean log Jacobian needs a nonempty region")
    if np.any(det[selected] <= 0):
        logger.warning("Folding inside the region, det F <= 0 at some voxels")
    return float(np.mean(np.log(np.clip(det[selected], 1e-12, None))))


def region_stats(
    strain_field: StrainField,
    u: VectorVolume,
    region: RegionMask,
    label: str,
    mode: str = CONFIG["MECHANICS_REGION_MODE"],
) -> RegionStats:
    """
    Mean and SD (population) of E1, E2, E3 over the region minus the outermost grid layer,
    with the mean deformation of u
    """
    strain_field.geometry.check_same(region.geometry, "strain and region")
    selected = (region_weights(region, mode) > 0.5) & interior_mask(region.geometry.dims, 1)
    if not selected.any():
        logger.error(f"Region of frame {label} has no interior voxels")
        raise RegionError(f"Region of frame {label} has no interior voxels")

    values = strain_field.eigenvalues[selected]
    return RegionStats(
        label=label,
        md=mean_deformation(u, region, mode),
        e_mean=tuple(float(x) for x in values.mean(axis=0)),
        e_sd=tuple(float(x) for x in values.std(axis=0)),
        voxels=int(selected.sum()),
    )


def frame_stats(u: VectorVolume, region: RegionMask, label: str, mode: Optional[str] = None) -> Tuple[StrainField, RegionStats]:
    field = strain(u)
    return field, region_stats(field, u, region, label, mode or CONFIG["MECHANICS_REGION_MODE"])


__all__ = [
    "symmetric_eigenvalues",
    "symmetric_eigensystem",
    "deformation_gradient",
    "strain",
    "rigid_invariance_check",
    "region_weights",
    "mean_deformation",
    "mean_log_jacobian",
    "region_stats",
    "frame_stats",
]
