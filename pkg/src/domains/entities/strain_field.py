"""
# src/domains/entities/strain_field.py

Per-voxel Lagrangian strain with its eigen-system, and the region summary of one frame

逐体素拉格朗日应变及其特征系统, 以及单帧的区域统计
"""


from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from src.infrastructure.fieldcore import GridGeometry


STRAIN_COMPONENTS: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True, eq=False)
class StrainField:
    """
    tensor[..., 3, 3] symmetric, eigenvalues[..., k] with E1 >= E2 >= E3,
    eigenvectors[..., :, k] unit direction of eigenvalue k
    """

    geometry: GridGeometry
    tensor: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    def components(self) -> np.ndarray:
        """
        The 6 unique components (xx, yy, zz, xy, xz, yz) stacked on the last axis
        """
        return np.stack([self.tensor[..., r, c] for r, c in STRAIN_COMPONENTS], axis=-1)


@dataclass(frozen=True)
class RegionStats:
    label: str
    md: float
    e_mean: Tuple[float, float, float]
    e_sd: Tuple[float, float, float]
    voxels: int

    def __post_init__(self) -> None:
        if self.md < 0 or min(self.e_sd) < 0:
            raise ValueError(f"Region statistics must be nonnegative: MD={self.md}, SD={self.e_sd}")

    def as_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {"label": self.label}
        for k in range(3):
            row[f"E{k + 1}_mean"] = float(self.e_mean[k])
            row[f"E{k + 1}_sd"] = float(self.e_sd[k])
        row["MD_mm"] = float(self.md)
        row["voxels"] = int(self.voxels)
        return row


__all__ = ["STRAIN_COMPONENTS", "StrainField", "RegionStats"]
