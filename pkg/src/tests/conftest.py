"""
# src/tests/conftest.py

Shared fixtures: small grids, seeded generators and an isolated log cache

共享测试夹具: 小网格, 固定种子的随机数生成器与隔离的日志缓存目录
"""


import numpy as np
import pytest

from src.infrastructure.fieldcore import GridGeometry


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path_factory, monkeypatch):
    # Log files of setup_logging land here instead of the user cache
    monkeypatch.setenv("XDG_CACHE_HOME", str(tmp_path_factory.mktemp("cache")))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def geometry():
    return GridGeometry.centered((12, 12, 12), (1.5, 1.5, 1.5))


@pytest.fixture
def anisotropic_geometry():
    return GridGeometry(dims=(10, 8, 6), spacing=(1.0, 1.5, 2.0), origin=(-4.0, 2.0, 0.5))


def linear_field(geometry: GridGeometry, matrix: np.ndarray, offset=(0.0, 0.0, 0.0)) -> np.ndarray:
    """
    u(x) = A x + b sampled on the grid
    """
    return geometry.grid_points() @ np.asarray(matrix, dtype=np.float64).T + np.asarray(offset, dtype=np.float64)
