"""
# src/domains/services/harp_service.py

Harmonic phase extraction and the wrapped-phase algebra used by the motion update

谐波相位提取, 以及运动更新所用的包裹相位运算
"""


from __future__ import annotations
from typing import Sequence
import logging

import numpy as np
from scipy import fft

from src.config import CONFIG
from src.domains.entities import PhasePair
from src.infrastructure.errors import HarpParameterError, ShapeMismatchError
from src.infrastructure.fieldcore import (
    GridGeometry,
    RegionMask,
    ScalarVolume,
    VectorVolume,
    frequency_grid,
    gradient_array,
)
from .phantom_service import orientation_axis


logger = logging.getLogger(__name__)


def wrap(theta):
    """
    mod(theta + pi, 2 pi) - pi, in [-pi, pi)
    """
    out = np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    # mod can round up to exactly 2 pi for tiny negative inputs
    out = np.where(out >= np.pi, out - 2.0 * np.pi, out)
    return float(out) if np.ndim(out) == 0 else out


def wrapped_gradient_array(phase: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """
    Per voxel, the smaller of grad(phase) and grad(W(phase + pi))
    """
    direct = gradient_array(phase, geometry)
    shifted = gradient_array(wrap(phase + np.pi), geometry)
    use_direct = np.sum(direct ** 2, axis=-1) <= np.sum(shifted ** 2, axis=-1)
    return np.where(use_direct[..., None], direct, shifted)


def wrapped_gradient(phase: ScalarVolume) -> VectorVolume:
    return VectorVolume(phase.geometry, wrapped_gradient_array(phase.values, phase.geometry))


def check_nyquist(geometry: GridGeometry, period_mm: float) -> None:
    limit = 2.0 * max(geometry.spacing)
    if not period_mm > limit:
        logger.error(f"Tag period {period_mm} mm does not exceed 2 x max spacing = {limit} mm")
        raise HarpParameterError(f"Tag period {period_mm} mm must exceed 2 x max spacing = {limit} mm")


def extract_phase(
    tagged: ScalarVolume,
    orientation: str,
    period_mm: float,
    bandwidth_ratio: float = CONFIG["HARP_BANDWIDTH_RATIO"],
) -> PhasePair:
    """
    Isolate the +1 harmonic of the tag pattern with a Gaussian bandpass

    params
    ------
    tagged: ScalarVolume - one tagged volume
    orientation: str - tag orientation, selects the tag-normal axis
    period_mm: float - tag period
    bandwidth_ratio: float - sigma of the Gaussian bandpass over its center frequency

    return
    ------
    PhasePair - wrapped phase and magnitude
    """
    geometry = tagged.geometry
    check_nyquist(geometry, period_mm)
    axis = orientation_axis(orientation)

    f0 = 1.0 / period_mm
    sigma = bandwidth_ratio * f0
    freqs = list(frequency_grid(geometry))
    freqs[axis] = freqs[axis] - f0
    distance_sq = freqs[0] ** 2 + freqs[1] ** 2 + freqs[2] ** 2
    bandpass = np.exp(-distance_sq / (2.0 * sigma ** 2))

    harmonic = fft.ifftn(fft.fftn(tagged.values) * bandpass)
    phase = wrap(np.angle(harmonic))
    magnitude = np.abs(harmonic)
    return PhasePair(ScalarVolume(geometry, phase), ScalarVolume(geometry, magnitude))


def combine_masks(
    magnitudes: Sequence[ScalarVolume],
    threshold_fraction: float = CONFIG["HARP_THRESHOLD_FRACTION"],
) -> RegionMask:
    """
    Binary tissue mask from the voxelwise geometric mean of the three magnitudes
    """
    if len(magnitudes) != 3:
        raise ShapeMismatchError(f"Expected three magnitude volumes, got {len(magnitudes)}")
    geometry = magnitudes[0].geometry
    for other in magnitudes[1:]:
        geometry.check_same(other.geometry, "HARP magnitudes")

    combined = np.cbrt(magnitudes[0].values * magnitudes[1].values * magnitudes[2].values)
    peak = float(combined.max())
    if peak <= 0:
        logger.warning("All HARP magnitudes vanish, tissue mask is empty")
        return RegionMask.full(geometry, 0.0)
    return RegionMask.from_bool(geometry, combined / peak >= threshold_fraction)


__all__ = [
    "wrap",
    "wrapped_gradient_array",
    "wrapped_gradient",
    "check_nyquist",
    "extract_phase",
    "combine_masks",
]
