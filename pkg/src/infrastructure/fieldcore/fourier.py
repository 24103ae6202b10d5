"""
# src/infrastructure/fieldcore/fourier.py

Spectral helpers (wavenumbers, Helmholtz projection), Gaussian smoothing and resolution pyramids

频域工具 (波数, Helmholtz 投影), 高斯平滑与多分辨率金字塔
"""


from __future__ import annotations
from typing import List, Tuple
import logging

import numpy as np
from scipy import fft, ndimage

from .grid import GridGeometry
from src.infrastructure.errors import GeometryError


logger = logging.getLogger(__name__)


def frequency_grid(geometry: GridGeometry) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Broadcastable cycles/mm frequency axes matching fft.fftn output ordering
    """
    axes = []
    for axis, (n, s) in enumerate(zip(geometry.dims, geometry.spacing)):
        shape = [1, 1, 1]
        shape[axis] = n
        axes.append(fft.fftfreq(n, d=s).reshape(shape))
    return tuple(axes)


def difference_wavenumbers(geometry: GridGeometry) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    sin(k h) / h per axis: the Fourier symbol of the central difference
    """
    out = []
    for freq, h in zip(frequency_grid(geometry), geometry.spacing):
        out.append(np.sin(2.0 * np.pi * freq * h) / h)
    return tuple(out)


def helmholtz_project_array(vectors: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """
    Divergence-free part of a periodic vector field

    Modes whose difference wavenumber vanishes (mean and Nyquist) pass through unchanged

    params
    ------
    vectors: np.ndarray - field of shape (nx, ny, nz, 3)
    geometry: GridGeometry - grid of the field

    return
    ------
    np.ndarray - projected field, zero central-difference divergence away from the boundary
    """
    spectra = [fft.fftn(vectors[..., c]) for c in range(3)]
    k = difference_wavenumbers(geometry)
    k_sq = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    safe = np.where(k_sq > 1e-14 * float(np.max(k_sq, initial=1.0)), k_sq, np.inf)
    k_dot_u = k[0] * spectra[0] + k[1] * spectra[1] + k[2] * spectra[2]
    ratio = k_dot_u / safe
    return np.stack([fft.ifftn(spectra[c] - k[c] * ratio).real for c in range(3)], axis=-1)


def smooth_array(values: np.ndarray, sigma_voxels: float) -> np.ndarray:
    """
    Gaussian smoothing with sigma in voxels; vector arrays are smoothed per component
    """
    if sigma_voxels <= 0:
        return np.array(values, dtype=np.float64, copy=True)
    sigma = [sigma_voxels] * 3 + [0.0] * (values.ndim - 3)
    return ndimage.gaussian_filter(values, sigma=sigma, mode="nearest")


def downsample_geometry(geometry: GridGeometry, factor: int) -> GridGeometry:
    dims = tuple(len(range(0, n, factor)) for n in geometry.dims)
    if min(dims) < 2:
        raise GeometryError(f"Downsampling {geometry.dims} by {factor} leaves fewer than 2 voxels per axis")
    return GridGeometry(dims=dims, spacing=tuple(s * factor for s in geometry.spacing), origin=geometry.origin)


def downsample_array(values: np.ndarray, geometry: GridGeometry, factor: int) -> Tuple[np.ndarray, GridGeometry]:
    """
    Anti-aliased subsampling by an integer factor; the coarse grid keeps the origin

    return
    ------
    Tuple[np.ndarray, GridGeometry] - coarse samples and their geometry
    """
    if factor == 1:
        return np.array(values, dtype=np.float64, copy=True), geometry
    coarse_geometry = downsample_geometry(geometry, factor)
    smoothed = smooth_array(values, 0.5 * factor)
    return smoothed[::factor, ::factor, ::factor].copy(), coarse_geometry


def pyramid_factors(levels: int) -> List[int]:
    """
    Coarse-to-fine integer factors, e.g. 3 levels -> [4, 2, 1]
    """
    return [2 ** level for level in reversed(range(max(1, int(levels))))]


__all__ = [
    "frequency_grid",
    "difference_wavenumbers",
    "helmholtz_project_array",
    "smooth_array",
    "downsample_geometry",
    "downsample_array",
    "pyramid_factors",
]
