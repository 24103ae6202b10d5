"""
# src/infrastructure/fieldcore

Regular-grid field containers and the numerical operators shared by every analysis stage

规则网格场容器以及各分析阶段共享的数值算子
"""


from .grid import GridGeometry, ScalarVolume, VectorVolume, RegionMask, Volume
from .interpolation import (
    sample_array,
    interpolate,
    warp_array,
    warp,
    compose_arrays,
    compose,
    invert_array,
    invert,
    resample_array,
    resample,
)
from .differential import (
    gradient_array,
    jacobian_array,
    divergence_array,
    gradient,
    jacobian,
    divergence,
    jacobian_determinant,
    interior_mask,
)
from .fourier import (
    frequency_grid,
    difference_wavenumbers,
    helmholtz_project_array,
    smooth_array,
    downsample_geometry,
    downsample_array,
    pyramid_factors,
)


__all__ = [
    "GridGeometry",
    "ScalarVolume",
    "VectorVolume",
    "RegionMask",
    "Volume",
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
    "gradient_array",
    "jacobian_array",
    "divergence_array",
    "gradient",
    "jacobian",
    "divergence",
    "jacobian_determinant",
    "interior_mask",
    "frequency_grid",
    "difference_wavenumbers",
    "helmholtz_project_array",
    "smooth_array",
    "downsample_geometry",
    "downsample_array",
    "pyramid_factors",
]
