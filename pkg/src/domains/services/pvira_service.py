"""
# src/domains/services/pvira_service.py

Phase-based incompressible diffeomorphic motion tracking: symmetric velocity update on wrapped
phases, masked Helmholtz projection, scaling-and-squaring exponential, multi-resolution loop

基于相位的不可压缩微分同胚运动追踪: 包裹相位上的对称速度更新, 掩膜 Helmholtz 投影,
缩放平方指数映射, 多分辨率迭代
"""


from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import ndimage

from src.config import CONFIG, PviraConfig
from src.domains.entities import DiffeoField, PhasePair
from src.infrastructure.errors import ShapeMismatchError
from src.infrastructure.fieldcore import (
    GridGeometry,
    RegionMask,
    VectorVolume,
    compose_arrays,
    divergence_array,
    downsample_array,
    helmholtz_project_array,
    jacobian_array,
    pyramid_factors,
    resample_array,
    smooth_array,
    warp_array,
)
from .harp_service import wrap, wrapped_gradient_array


logger = logging.getLogger(__name__)

# orientation -> (reference phase, time phase)
PhaseArrays = Dict[str, Tuple[np.ndarray, np.ndarray]]


@dataclass
class TrackingResult:
    """
    Motion of one frame with its convergence log
    """

    motion: DiffeoField
    log: List[Dict[str, float]] = field(default_factory=list)
    converged: bool = True
    incompressible: bool = True # every projection met div_tolerance in the mask interior


# ---------------------------------------------------------------- exponential map

def exponentiate_array(velocity: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """
    Displacement of exp(v) by scaling and squaring

    params
    ------
    velocity: np.ndarray - stationary velocity (mm), shape (nx, ny, nz, 3)
    geometry: GridGeometry - grid of the velocity

    return
    ------
    np.ndarray - displacement of the flow at unit time
    """
    peak = float(np.max(np.linalg.norm(velocity, axis=-1), initial=0.0))
    if peak == 0.0:
        return np.zeros_like(velocity, dtype=np.float64)
    steps = max(0, math.ceil(math.log2(peak / (0.5 * geometry.min_spacing))))
    small = velocity / (2.0 ** steps)
    # second-order base map
    displacement = small + 0.5 * np.einsum("...rc,...c->...r", jacobian_array(small, geometry), small)
    for _ in range(steps):
        displacement = compose_arrays(displacement, displacement, geometry)
    return displacement


def exponentiate(velocity: VectorVolume) -> DiffeoField:
    """
    phi = exp(v) and phi^-1 = exp(-v)
    """
    geometry = velocity.geometry
    forward = exponentiate_array(velocity.vectors, geometry)
    inverse = exponentiate_array(-velocity.vectors, geometry)
    return DiffeoField(VectorVolume(geometry, forward), VectorVolume(geometry, inverse))


# ---------------------------------------------------------------- update and projection

def warp_phase(phase: np.ndarray, geometry: GridGeometry, displacement: np.ndarray) -> np.ndarray:
    """
    Resample a wrapped phase through a displacement by interpolating its unit phasor
    """
    cos = warp_array(np.cos(phase), geometry, displacement)
    sin = warp_array(np.sin(phase), geometry, displacement)
    return wrap(np.arctan2(sin, cos))


def velocity_update_arrays(
    phases: PhaseArrays,
    geometry: GridGeometry,
    K: float,
    epsilon: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    delta v = v0 / (alpha1 + alpha2 / K), zero where the denominator is below epsilon

    return
    ------
    Tuple[np.ndarray, np.ndarray] - the update and alpha2 (phase mismatch energy per voxel)
    """
    v0 = np.zeros(geometry.shape + (3,))
    alpha1 = np.zeros(geometry.shape)
    alpha2 = np.zeros(geometry.shape)
    for reference, moving in phases.values():
        difference = wrap(reference - moving)
        paired = wrapped_gradient_array(reference, geometry) + wrapped_gradient_array(moving, geometry)
        v0 += difference[..., None] * paired
        alpha1 += np.sum(paired ** 2, axis=-1)
        alpha2 += difference ** 2
    denominator = alpha1 + alpha2 / K
    valid = denominator >= epsilon
    update = np.where(valid[..., None], v0 / np.where(valid, denominator, 1.0)[..., None], 0.0)
    return update, alpha2


def _phase_arrays(pairs: Mapping[str, Tuple[PhasePair, PhasePair]]) -> Tuple[GridGeometry, PhaseArrays]:
    geometry: Optional[GridGeometry] = None
    out: PhaseArrays = {}
    for orientation, (reference, moving) in pairs.items():
        for pair in (reference, moving):
            if geometry is None:
                geometry = pair.geometry
            else:
                geometry.check_same(pair.geometry, f"phase volumes of orientation {orientation}")
        out[orientation] = (reference.phase.values, moving.phase.values)
    if geometry is None or len(out) != 3:
        raise ShapeMismatchError(f"Expected phase pairs of three orientations, got {sorted(out)}")
    return geometry, out


def velocity_update(
    pairs: Mapping[str, Tuple[PhasePair, PhasePair]],
    current_warp: Optional[DiffeoField],
    cfg: PviraConfig,
) -> VectorVolume:
    """
    Symmetric update from the three (frame 0, frame t) phase pairs

    params
    ------
    pairs: Mapping[str, Tuple[PhasePair, PhasePair]] - orientation -> (reference pair, time-t pair)
    current_warp: Optional[DiffeoField] - time-t phases are resampled through its forward map first
    cfg: PviraConfig - provides K and the epsilon ratio

    return
    ------
    VectorVolume - velocity increment (mm)
    """
    geometry, phases = _phase_arrays(pairs)
    if current_warp is not None:
        geometry.check_same(current_warp.geometry, "phases and current warp")
        displacement = current_warp.forward.vectors
        phases = {o: (ref, warp_phase(mov, geometry, displacement)) for o, (ref, mov) in phases.items()}
    K = cfg.normalization(geometry.mean_spacing)
    update, _ = velocity_update_arrays(phases, geometry, K, cfg.epsilon_ratio * K)
    return VectorVolume(geometry, update)


def project_array(velocity: np.ndarray, mask: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """
    mask * P(v) + (1 - mask) * v with P the spectral divergence-free projection
    """
    if not np.any(mask):
        return np.array(velocity, dtype=np.float64, copy=True)
    projected = helmholtz_project_array(velocity, geometry)
    weights = np.asarray(mask, dtype=np.float64)[..., None]
    return weights * projected + (1.0 - weights) * velocity


def incompressibility_project(velocity: VectorVolume, mask: RegionMask) -> VectorVolume:
    velocity.geometry.check_same(mask.geometry, "velocity and tissue mask")
    return velocity.with_vectors(project_array(velocity.vectors, mask.weights, velocity.geometry))


def interior_divergence(velocity: np.ndarray, mask: np.ndarray, geometry: GridGeometry) -> float:
    """
    Largest |div v| over mask voxels whose face neighbours all lie in the mask, grid border excluded
    """
    interior = ndimage.binary_erosion(np.asarray(mask) > 0.5, border_value=0)
    if not interior.any():
        return 0.0
    return float(np.max(np.abs(divergence_array(velocity, geometry)[interior])))


# ---------------------------------------------------------------- tracking

def _downsample_phase(phase: np.ndarray, geometry: GridGeometry, factor: int) -> Tuple[np.ndarray, GridGeometry]:
    cos, coarse = downsample_array(np.cos(phase), geometry, factor)
    sin, _ = downsample_array(np.sin(phase), geometry, factor)
    return wrap(np.arctan2(sin, cos)), coarse


def _level_factors(geometry: GridGeometry, cfg: PviraConfig, period_mm: float) -> List[int]:
    factors = []
    for factor in pyramid_factors(cfg.pyramid_levels):
        voxels_per_period = period_mm / (factor * max(geometry.spacing))
        too_small = min(len(range(0, n, factor)) for n in geometry.dims) < 4
        if factor > 1 and (voxels_per_period < cfg.min_voxels_per_period or too_small):
            logger.warning(f"Skipping pyramid level x{factor}: {voxels_per_period:.2f} voxels per tag period")
            continue
        factors.append(factor)
    return factors or [1]


def _track_level(
    phases: PhaseArrays,
    mask: np.ndarray,
    geometry: GridGeometry,
    velocity: np.ndarray,
    cfg: PviraConfig,
    factor: int,
    log: List[Dict[str, float]],
) -> Tuple[np.ndarray, bool, bool]:
    K = cfg.normalization(geometry.mean_spacing)
    epsilon = cfg.epsilon_ratio * K
    support = ndimage.binary_dilation(mask, iterations=cfg.support_dilation) if cfg.support_dilation else mask.copy()
    mask_count = max(int(mask.sum()), 1)
    spacing = np.asarray(geometry.spacing)

    best_velocity, best_energy = velocity, np.inf
    first_rms: Optional[float] = None
    rms = np.inf
    incompressible = True
    for iteration in range(cfg.iterations):
        displacement = exponentiate_array(velocity, geometry)
        warped = {o: (ref, warp_phase(mov, geometry, displacement)) for o, (ref, mov) in phases.items()}
        update, alpha2 = velocity_update_arrays(warped, geometry, K, epsilon)
        update[~support] = 0.0

        energy = float(np.sum(alpha2[mask])) / mask_count
        if energy < best_energy:
            best_energy, best_velocity = energy, velocity

        update = smooth_array(update, cfg.fluid_sigma_voxels)
        rms = float(np.sqrt(np.mean(np.sum((update[support] / spacing) ** 2, axis=-1)))) if support.any() else 0.0
        first_rms = rms if first_rms is None else first_rms

        projected = project_array(velocity + update, mask, geometry)
        projected_div = interior_divergence(projected, mask, geometry)
        if projected_div > cfg.div_tolerance:
            incompressible = False
        velocity = smooth_array(projected, cfg.diffusion_sigma_voxels)

        divergence = divergence_array(velocity, geometry)
        log.append(
            {
                "level": factor,
                "iteration": iteration,
                "update_rms_voxels": rms,
                "mean_abs_div": float(np.mean(np.abs(divergence[mask]))) if mask.any() else 0.0,
                "projected_max_div": projected_div,
                "phase_energy": energy,
            }
        )
        if rms < cfg.convergence_tol:
            break

    # the last velocity has not been scored yet
    displacement = exponentiate_array(velocity, geometry)
    warped = {o: (ref, warp_phase(mov, geometry, displacement)) for o, (ref, mov) in phases.items()}
    _, alpha2 = velocity_update_arrays(warped, geometry, K, epsilon)
    if float(np.sum(alpha2[mask])) / mask_count <= best_energy:
        best_velocity = velocity

    converged = first_rms is None or rms < cfg.convergence_tol or rms < first_rms
    return best_velocity, converged, incompressible


def track_frame(
    reference: Mapping[str, PhasePair],
    moving: Mapping[str, PhasePair],
    mask: RegionMask,
    cfg: PviraConfig,
    period_mm: float,
) -> TrackingResult:
    """
    Motion between the reference frame and one later frame

    params
    ------
    reference: Mapping[str, PhasePair] - orientation -> frame 0 phases
    moving: Mapping[str, PhasePair] - orientation -> frame t phases
    mask: RegionMask - tissue mask on the reference grid
    cfg: PviraConfig - solver parameters
    period_mm: float - tag period, decides which pyramid levels can represent the phases

    return
    ------
    TrackingResult - forward: material-point displacement u(X) = phi(X) - X on the reference grid (Lagrangian),
                     inverse: phi^-1(x) - x on the spatial grid (Eulerian look-up)
    """
    geometry, phases = _phase_arrays({o: (reference[o], moving[o]) for o in reference})
    geometry.check_same(mask.geometry, "phases and tissue mask")
    binary = mask.as_bool()

    log: List[Dict[str, float]] = []
    converged = incompressible = True
    velocity: Optional[np.ndarray] = None
    level_geometry = previous_geometry = geometry
    for factor in _level_factors(geometry, cfg, period_mm):
        level_phases: PhaseArrays = {}
        for orientation, (ref, mov) in phases.items():
            ref_level, level_geometry = _downsample_phase(ref, geometry, factor)
            mov_level, _ = _downsample_phase(mov, geometry, factor)
            level_phases[orientation] = (ref_level, mov_level)
        if factor == 1:
            level_mask = binary
        else:
            weights, _ = downsample_array(binary.astype(np.float64), geometry, factor)
            level_mask = weights >= 0.5

        if velocity is None:
            start = np.zeros(level_geometry.shape + (3,))
        else:
            start = resample_array(velocity, previous_geometry, level_geometry)
        velocity, level_converged, level_incompressible = _track_level(
            level_phases, level_mask, level_geometry, start, cfg, factor, log
        )
        previous_geometry = level_geometry
        if not level_converged:
            converged = False
            logger.warning(f"PVIRA update norm did not decrease on level x{factor}; keeping the best iterate")
        if not level_incompressible:
            incompressible = False
            logger.warning(f"Projected divergence exceeded {cfg.div_tolerance:g} inside the mask on level x{factor}")

    result = exponentiate(VectorVolume(geometry, velocity))
    return TrackingResult(motion=result, log=log, converged=converged, incompressible=incompressible)


def track(
    reference: Mapping[str, PhasePair],
    frames: Sequence[Mapping[str, PhasePair]],
    mask: RegionMask,
    cfg: PviraConfig,
    period_mm: float = CONFIG["PHANTOM_TAG_PERIOD_MM"],
    max_workers: Optional[int] = None,
) -> List[TrackingResult]:
    """
    Track every later frame against the reference; frames run concurrently, results keep frame order
    """
    if not frames:
        raise ValueError("Tracking needs at least one frame after the reference")
    with ThreadPoolExecutor(
        max_workers=max_workers or CONFIG["MAX_WORKERS"], thread_name_prefix="pvira_frame"
    ) as executor:
        futures = [executor.submit(track_frame, reference, frame, mask, cfg, period_mm) for frame in frames]
        return [future.result() for future in futures]


__all__ = [
    "TrackingResult",
    "exponentiate_array",
    "exponentiate",
    "warp_phase",
    "velocity_update_arrays",
    "velocity_update",
    "project_array",
    "incompressibility_project",
    "interior_divergence",
    "track_frame",
    "track",
]
