"""
# src/domains/services/atlas_service.py

Unbiased groupwise atlas of the reference-frame anatomy: local cross-correlation metric,
groupwise affine initialisation with log-domain centering, groupwise diffeomorphic refinement

参考帧解剖结构的无偏群组图谱: 局部互相关度量, 对数域居中的群组仿射初始化, 群组微分同胚细化
"""


from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import linalg, ndimage, optimize

from src.config import CONFIG, AtlasConfig
from src.domains.entities import AffineTransform, Atlas, DiffeoField
from src.infrastructure.errors import ShapeMismatchError
from src.infrastructure.fieldcore import (
    GridGeometry,
    ScalarVolume,
    VectorVolume,
    downsample_array,
    gradient_array,
    invert_array,
    compose_arrays,
    pyramid_factors,
    resample_array,
    sample_array,
    smooth_array,
    warp_array,
)
from .pvira_service import exponentiate_array


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- metric

def _box(values: np.ndarray, radius: int) -> np.ndarray:
    return ndimage.uniform_filter(values, size=2 * radius + 1, mode="nearest")


def cc_terms(a: np.ndarray, b: np.ndarray, radius: int) -> Tuple[float, np.ndarray, int]:
    """
    Mean local NCC over the valid windows and its derivative with respect to the intensities of b

    return
    ------
    Tuple[float, np.ndarray, int] - score, d score / d b per voxel, number of valid windows
    """
    mu_a, mu_b = _box(a, radius), _box(b, radius)
    s_aa = _box(a * a, radius) - mu_a ** 2
    s_bb = _box(b * b, radius) - mu_b ** 2
    s_ab = _box(a * b, radius) - mu_a * mu_b
    floor = 1e-8 * max(float(np.var(a)), float(np.var(b))) + 1e-15
    valid = (s_aa > floor) & (s_bb > floor)
    count = int(valid.sum())
    if count == 0:
        return 0.0, np.zeros_like(b), 0

    denominator = np.sqrt(np.where(valid, s_aa * s_bb, 1.0))
    local = np.where(valid, s_ab / denominator, 0.0)
    score = float(np.sum(local[valid])) / count

    k1 = np.where(valid, 1.0 / denominator, 0.0)
    k2 = np.where(valid, k1 * s_ab / np.where(valid, s_bb, 1.0), 0.0)
    derivative = a * _box(k1, radius) - _box(mu_a * k1, radius) - b * _box(k2, radius) + _box(mu_b * k2, radius)
    return score, derivative / count, count


def cc_metric(a: ScalarVolume, b: ScalarVolume, radius: int = CONFIG["ATLAS_CC_RADIUS"]) -> Tuple[float, VectorVolume]:
    """
    Local normalized cross-correlation over (2r+1)^3 windows, averaged over windows with
    nonzero variance, and its gradient with respect to a displacement of b

    params
    ------
    a: ScalarVolume - fixed image
    b: ScalarVolume - image whose deformation the gradient refers to
    radius: int - window radius in voxels

    return
    ------
    Tuple[float, VectorVolume] - score in [-1, 1] and d score / d u
    """
    a.geometry.check_same(b.geometry, "cross-correlation inputs")
    score, derivative, _ = cc_terms(a.values, b.values, radius)
    gradient = derivative[..., None] * gradient_array(b.values, b.geometry)
    return score, VectorVolume(b.geometry, gradient)


def normalize_intensity(values: np.ndarray, foreground_fraction: float) -> np.ndarray:
    """
    Zero mean, unit variance inside the foreground (>= fraction of the maximum)
    """
    foreground = values >= foreground_fraction * float(values.max())
    if foreground.sum() < 2:
        foreground = np.ones_like(values, dtype=bool)
    mean = float(values[foreground].mean())
    std = float(values[foreground].std())
    return (values - mean) / (std if std > 0 else 1.0)


def _levels(geometry: GridGeometry, levels: int) -> List[int]:
    usable = [f for f in pyramid_factors(levels) if min(len(range(0, n, f)) for n in geometry.dims) >= 8]
    return usable or [1]


def _check_cohort(volumes: Sequence[ScalarVolume]) -> GridGeometry:
    if len(volumes) < 2:
        raise ValueError(f"Groupwise registration needs at least 2 volumes, got {len(volumes)}")
    geometry = volumes[0].geometry
    for k, volume in enumerate(volumes[1:], start=1):
        geometry.check_same(volume.geometry, f"cohort volumes 0 and {k}")
    return geometry


# ---------------------------------------------------------------- affine

class _AffineProblem:
    """
    x -> c + (I + P) (x - c) + scale * q, parameters p = (P.ravel(), q)
    """

    def __init__(self, fixed: np.ndarray, moving: np.ndarray, geometry: GridGeometry, center: np.ndarray, scale: float, radius: int) -> None:
        self.fixed = fixed
        self.moving = moving
        self.geometry = geometry
        self.center = center
        self.scale = scale
        self.radius = radius
        self.points = geometry.grid_points()
        self.offsets = self.points - center
        self.moving_gradient = gradient_array(moving, geometry)

    @staticmethod
    def to_homogeneous(p: np.ndarray, center: np.ndarray, scale: float) -> np.ndarray:
        linear = np.eye(3) + p[:9].reshape(3, 3)
        out = np.eye(4)
        out[:3, :3] = linear
        out[:3, 3] = center - linear @ center + scale * p[9:]
        return out

    @staticmethod
    def from_homogeneous(h: np.ndarray, center: np.ndarray, scale: float) -> np.ndarray:
        linear = h[:3, :3]
        q = (h[:3, 3] - center + linear @ center) / scale
        return np.concatenate([(linear - np.eye(3)).ravel(), q])

    def __call__(self, p: np.ndarray) -> Tuple[float, np.ndarray]:
        linear = np.eye(3) + p[:9].reshape(3, 3)
        mapped = self.offsets @ linear.T + self.center + self.scale * p[9:]
        warped = sample_array(self.moving, self.geometry, mapped)
        score, derivative, count = cc_terms(self.fixed, warped, self.radius)
        if count == 0:
            return 0.0, np.zeros(12)
        sampled_gradient = sample_array(self.moving_gradient, self.geometry, mapped)
        weighted = derivative[..., None] * sampled_gradient
        grad_linear = np.einsum("nr,nc->rc", weighted.reshape(-1, 3), self.offsets.reshape(-1, 3))
        grad_shift = weighted.reshape(-1, 3).sum(axis=0) * self.scale
        return -score, -np.concatenate([grad_linear.ravel(), grad_shift])


def _register_affine(
    fixed: np.ndarray,
    moving: np.ndarray,
    geometry: GridGeometry,
    start: np.ndarray,
    cfg: AtlasConfig,
) -> np.ndarray:
    """
    Homogeneous matrix maximizing CC(fixed, moving o T), T: template -> subject coordinates
    """
    center = geometry.center
    scale = 0.25 * float(np.mean(np.asarray(geometry.dims) * np.asarray(geometry.spacing)))
    p = _AffineProblem.from_homogeneous(start, center, scale)
    for factor in _levels(geometry, cfg.pyramid_levels):
        fixed_level, level_geometry = downsample_array(fixed, geometry, factor)
        moving_level, _ = downsample_array(moving, geometry, factor)
        problem = _AffineProblem(fixed_level, moving_level, level_geometry, center, scale, cfg.affine_cc_radius)
        result = optimize.minimize(problem, p, jac=True, method="L-BFGS-B", options={"maxiter": cfg.affine_iterations})
        if not result.success:
            logger.debug(f"Affine level x{factor} stopped: {result.message}")
        if result.fun <= problem(p)[0]:
            p = result.x
    return _AffineProblem.to_homogeneous(p, center, scale)


def _center_affines(matrices: List[np.ndarray]) -> List[np.ndarray]:
    logs = [np.real(linalg.logm(h)) for h in matrices]
    mean = np.mean(logs, axis=0)
    return [np.real(linalg.expm(log - mean)) for log in logs]


def _affine_template(volumes: Sequence[np.ndarray], matrices: Sequence[np.ndarray], geometry: GridGeometry) -> np.ndarray:
    points = geometry.grid_points()
    warped = [sample_array(v, geometry, points @ h[:3, :3].T + h[:3, 3]) for v, h in zip(volumes, matrices)]
    return np.mean(warped, axis=0)


def groupwise_affine(
    volumes: Sequence[ScalarVolume],
    cfg: Optional[AtlasConfig] = None,
    max_workers: Optional[int] = None,
    log: Optional[List[Dict[str, object]]] = None,
) -> List[AffineTransform]:
    """
    Register every volume to the running average with a 12-parameter affine, keeping the
    cohort centered by subtracting the mean matrix logarithm after each round

    params
    ------
    volumes: Sequence[ScalarVolume] - frame-0 anatomy of every subject, one geometry
    cfg: Optional[AtlasConfig] - rounds, iterations, pyramid, CC radius
    max_workers: Optional[int] - per-subject threads
    log: Optional[List[Dict[str, object]]] - receives one row per round

    return
    ------
    List[AffineTransform] - T_i mapping template coordinates to subject coordinates
    """
    cfg = cfg or AtlasConfig()
    geometry = _check_cohort(volumes)
    normalized = [normalize_intensity(v.values, cfg.foreground_fraction) for v in volumes]
    matrices = [np.eye(4) for _ in volumes]

    with ThreadPoolExecutor(max_workers=max_workers or CONFIG["MAX_WORKERS"], thread_name_prefix="atlas_affine") as executor:
        for round_index in range(cfg.affine_rounds):
            template = _affine_template(normalized, matrices, geometry)
            futures = [
                executor.submit(_register_affine, template, volume, geometry, h, cfg)
                for volume, h in zip(normalized, matrices)
            ]
            updated = [f.result() for f in futures]
            change = max(float(np.max(np.abs(u - h))) for u, h in zip(updated, matrices))
            matrices = _center_affines(updated)
            if log is not None:
                log.append({"phase": "affine", "round": round_index + 1, "max_change": change})
            logger.info(f"Groupwise affine round {round_index + 1}/{cfg.affine_rounds}, max parameter change {change:.2e}")
            if change < 1e-5:
                break
    return [AffineTransform.from_homogeneous(h) for h in matrices]


# ---------------------------------------------------------------- deformable

def _register_deformable(
    template: np.ndarray,
    moving: np.ndarray,
    geometry: GridGeometry,
    velocity: np.ndarray,
    cfg: AtlasConfig,
) -> Tuple[np.ndarray, float]:
    """
    Stationary velocity v maximizing CC(template, moving o exp(v)) by smoothed gradient steps
    """
    best_velocity, best_score = velocity, -np.inf
    previous_geometry = geometry
    current = velocity
    for factor in _levels(geometry, cfg.pyramid_levels):
        fixed_level, level_geometry = downsample_array(template, geometry, factor)
        moving_level, _ = downsample_array(moving, geometry, factor)
        if current.shape[:3] != level_geometry.shape:
            current = resample_array(current, previous_geometry, level_geometry)
        previous_geometry = level_geometry
        step = cfg.step_voxels * level_geometry.min_spacing
        best_velocity, best_score = current, -np.inf

        for _ in range(cfg.deformable_iterations):
            displacement = exponentiate_array(current, level_geometry)
            warped = warp_array(moving_level, level_geometry, displacement)
            score, derivative, count = cc_terms(fixed_level, warped, cfg.cc_radius)
            if score > best_score:
                best_score, best_velocity = score, current
            if count == 0:
                break
            force = smooth_array(derivative[..., None] * gradient_array(warped, level_geometry), cfg.fluid_sigma_voxels)
            peak = float(np.max(np.linalg.norm(force, axis=-1)))
            if peak <= 1e-12:
                break
            current = smooth_array(current + force * (step / peak), cfg.diffusion_sigma_voxels)
        current = best_velocity

    if previous_geometry.shape != geometry.shape:
        current = resample_array(current, previous_geometry, geometry)
    return current, best_score


def _center_displacements(
    displacements: List[np.ndarray],
    geometry: GridGeometry,
    iterations: int,
) -> List[np.ndarray]:
    """
    Reparametrize the atlas by psi = M^-1, M(y) = mean_i phi_i^-1(y), so the mean
    atlas -> subject displacement vanishes
    """
    for _ in range(iterations):
        mean = np.mean(displacements, axis=0)
        correction = invert_array(mean, geometry)
        displacements = [compose_arrays(d, correction, geometry) for d in displacements]
    return displacements


def groupwise_deformable(
    volumes: Sequence[ScalarVolume],
    affines: Sequence[AffineTransform],
    cfg: Optional[AtlasConfig] = None,
    subject_ids: Optional[Sequence[str]] = None,
    max_workers: Optional[int] = None,
    log: Optional[List[Dict[str, object]]] = None,
) -> Atlas:
    """
    Unbiased template by alternating per-subject diffeomorphic registration and template
    averaging, with the mean velocity removed after every round

    params
    ------
    volumes: Sequence[ScalarVolume] - frame-0 anatomy of every subject
    affines: Sequence[AffineTransform] - initial T_i from groupwise_affine
    cfg: Optional[AtlasConfig] - outer iterations, CC radius, step, smoothing, pyramid
    subject_ids: Optional[Sequence[str]] - keys of the mappings, defaults to "0", "1", ...
    max_workers: Optional[int] - per-subject threads
    log: Optional[List[Dict[str, object]]] - receives one row per outer iteration

    return
    ------
    Atlas - template and, per subject, forward phi_i (subject -> atlas) and inverse phi_i^-1
    """
    cfg = cfg or AtlasConfig()
    geometry = _check_cohort(volumes)
    if len(affines) != len(volumes):
        raise ShapeMismatchError(f"{len(affines)} affines for {len(volumes)} volumes")
    subject_ids = list(subject_ids) if subject_ids is not None else [str(k) for k in range(len(volumes))]

    normalized = [normalize_intensity(v.values, cfg.foreground_fraction) for v in volumes]
    affine_displacements = [a.displacement(geometry) for a in affines]
    aligned = [warp_array(v, geometry, d) for v, d in zip(normalized, affine_displacements)]
    velocities = [np.zeros(geometry.shape + (3,)) for _ in volumes]
    template = np.mean(aligned, axis=0)

    with ThreadPoolExecutor(max_workers=max_workers or CONFIG["MAX_WORKERS"], thread_name_prefix="atlas_deformable") as executor:
        for outer in range(cfg.outer_iterations):
            futures = [
                executor.submit(_register_deformable, template, moving, geometry, v, cfg)
                for moving, v in zip(aligned, velocities)
            ]
            results = [f.result() for f in futures]
            velocities = [r[0] for r in results]
            warped = [warp_array(m, geometry, exponentiate_array(v, geometry)) for m, v in zip(aligned, velocities)]
            template = np.mean(warped, axis=0)
            mean_velocity = np.mean(velocities, axis=0)
            template = warp_array(template, geometry, exponentiate_array(-mean_velocity, geometry))
            velocities = [v - mean_velocity for v in velocities]
            mean_cc = float(np.mean([r[1] for r in results]))
            if log is not None:
                log.append({"phase": "deformable", "round": outer + 1, "mean_cc": mean_cc})
            logger.info(f"Groupwise deformable round {outer + 1}/{cfg.outer_iterations}, mean CC {mean_cc:.4f}")

    # atlas -> subject: T_i o exp(v_i)
    inverse = [
        compose_arrays(a, exponentiate_array(v, geometry), geometry)
        for a, v in zip(affine_displacements, velocities)
    ]
    inverse = _center_displacements(inverse, geometry, cfg.centering_iterations)
    forward = [invert_array(d, geometry) for d in inverse]
    template = np.mean([warp_array(v, geometry, d) for v, d in zip(normalized, inverse)], axis=0)

    mappings = {
        sid: DiffeoField(VectorVolume(geometry, f), VectorVolume(geometry, d))
        for sid, f, d in zip(subject_ids, forward, inverse)
    }
    atlas = Atlas(ScalarVolume(geometry, template), mappings, dict(zip(subject_ids, affines)))
    logger.info(f"Atlas built from {len(volumes)} subjects, mean inverse displacement RMS {atlas.mean_inverse_rms():.3f} voxel")
    return atlas


def build_atlas(
    volumes: Sequence[ScalarVolume],
    subject_ids: Sequence[str],
    cfg: Optional[AtlasConfig] = None,
    max_workers: Optional[int] = None,
    log: Optional[List[Dict[str, object]]] = None,
) -> Atlas:
    cfg = cfg or AtlasConfig()
    if cfg.affine:
        affines = groupwise_affine(volumes, cfg, max_workers, log)
    else:
        affines = [AffineTransform.identity() for _ in volumes]
    return groupwise_deformable(volumes, affines, cfg, subject_ids, max_workers, log)


__all__ = [
    "cc_terms",
    "cc_metric",
    "normalize_intensity",
    "groupwise_affine",
    "groupwise_deformable",
    "build_atlas",
]
