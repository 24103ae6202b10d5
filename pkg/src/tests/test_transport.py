"""
# src/tests/test_transport.py

Conjugation of subject motion into atlas coordinates, the atlas region and cohort transport

被试运动向图谱坐标的共轭变换, 图谱区域与队列变换
"""


import numpy as np
import pytest

from src.config import TransportConfig
from src.domains.entities import Atlas, DiffeoField
from src.domains.services import (
    atlas_region,
    conjugate,
    conjugate_field,
    strain,
    strain_consistency,
    transport_cohort,
)
from src.domains.services.deformations import DivergenceFreeSwirl, IncompressibleShear
from src.infrastructure.errors import ManifestError, ShapeMismatchError
from src.infrastructure.fieldcore import (
    GridGeometry,
    RegionMask,
    ScalarVolume,
    VectorVolume,
    interior_mask,
    invert,
    jacobian_determinant,
)
from src.tests.conftest import linear_field


A = np.array([[1.05, 0.03, 0.0], [0.0, 0.97, 0.02], [0.0, 0.0, 1.0]])
B = np.array([0.5, -0.3, 0.2])


@pytest.fixture
def grid():
    return GridGeometry.centered((20, 20, 20), (1.5, 1.5, 1.5))


def constant(geometry: GridGeometry, vector) -> VectorVolume:
    return VectorVolume(geometry, np.broadcast_to(np.asarray(vector, dtype=np.float64), geometry.shape + (3,)))


def motion(displacement: VectorVolume) -> DiffeoField:
    return DiffeoField(displacement, invert(displacement))


def affine_map(geometry: GridGeometry, matrix=A, offset=B) -> DiffeoField:
    """
    phi(y) = matrix y + offset as a displacement pair
    """
    inverse_matrix = np.linalg.inv(matrix)
    forward = linear_field(geometry, matrix - np.eye(3), offset)
    inverse = linear_field(geometry, inverse_matrix - np.eye(3), -inverse_matrix @ offset)
    return DiffeoField(VectorVolume(geometry, forward), VectorVolume(geometry, inverse))


def swirl_motion(geometry: GridGeometry) -> VectorVolume:
    swirl = DivergenceFreeSwirl(angle_deg=20.0, width_mm=5.0, schedule=[0.0, 1.0])
    return VectorVolume(geometry, swirl.displacement(geometry))


class TestConjugate:
    def test_identity_atlas_map(self, grid, rng):
        field = VectorVolume(grid, 0.3 * rng.normal(size=grid.shape + (3,)))
        out = conjugate_field(motion(field), DiffeoField.identity(grid), RegionMask.full(grid))
        np.testing.assert_allclose(out.vectors, field.vectors, atol=1e-12)

    def test_translations_commute(self, grid):
        t, s = np.array([1.2, -0.4, 0.3]), np.array([0.6, 0.2, -0.9])
        atlas_map = DiffeoField(constant(grid, t), constant(grid, -t))
        region = RegionMask.from_bool(grid, interior_mask(grid.dims, 2))
        out = conjugate_field(motion(constant(grid, s)), atlas_map, region)
        np.testing.assert_allclose(out.vectors[region.as_bool()], np.broadcast_to(s, (int(region.as_bool().sum()), 3)), atol=1e-12)
        np.testing.assert_array_equal(out.vectors[~region.as_bool()], 0.0)

    def test_scaling_doubles_a_translation(self, grid):
        s = np.array([0.5, -0.25, 0.75])
        atlas_map = affine_map(grid, 2.0 * np.eye(3), np.zeros(3))
        region = RegionMask.from_bool(grid, interior_mask(grid.dims, 5))
        out = conjugate_field(motion(constant(grid, s)), atlas_map, region).vectors[region.as_bool()]
        np.testing.assert_allclose(out, np.broadcast_to(2.0 * s, out.shape), atol=1e-9)

    def test_analytic_affine_conjugation(self, grid):
        m = swirl_motion(grid)
        region = RegionMask.from_bool(grid, interior_mask(grid.dims, 3))
        out = conjugate(motion(m), affine_map(grid), region, label="/s/", subject_id="sub-01")
        assert out.subject_id == "sub-01" and list(out.frames) == ["/s/"]

        swirl = DivergenceFreeSwirl(angle_deg=20.0, width_mm=5.0)
        x = grid.grid_points()
        y = (x - B) @ np.linalg.inv(A).T
        truth = (swirl.forward(y) - y) @ A.T
        error = np.linalg.norm(out.frames["/s/"].vectors - truth, axis=-1)[region.as_bool()] / grid.min_spacing
        assert np.sqrt(np.mean(error ** 2)) < 0.1

    def test_conjugating_back_restores_the_motion(self, grid):
        m = swirl_motion(grid)
        atlas_map = affine_map(grid)
        there = conjugate_field(motion(m), atlas_map, RegionMask.full(grid))
        back = conjugate_field(motion(there), atlas_map.inverted(), RegionMask.full(grid))
        inner = interior_mask(grid.dims, 4)
        error = np.linalg.norm(back.vectors - m.vectors, axis=-1)[inner] / grid.min_spacing
        assert np.sqrt(np.mean(error ** 2)) < 0.25

    def test_transported_motion_stays_invertible(self, grid):
        out = conjugate_field(motion(swirl_motion(grid)), affine_map(grid), RegionMask.full(grid))
        det = jacobian_determinant(out)[interior_mask(grid.dims, 3)]
        assert det.min() > 0.0

    def test_geometry_mismatch(self, grid):
        other = GridGeometry.centered((20, 20, 19), (1.5, 1.5, 1.5))
        with pytest.raises(ShapeMismatchError):
            conjugate_field(motion(VectorVolume.zeros(other)), DiffeoField.identity(grid), RegionMask.full(grid))


class TestAtlasRegion:
    def template(self) -> ScalarVolume:
        geometry = GridGeometry.centered((16, 16, 16), (1.0, 1.0, 1.0))
        values = np.zeros(geometry.shape)
        values[5:11, 5:11, 5:11] = 10.0
        return ScalarVolume(geometry, values)

    def test_threshold_without_dilation(self):
        template = self.template()
        region = atlas_region(template, TransportConfig(region_dilation=0))
        np.testing.assert_array_equal(region.as_bool(), template.values > 0)
        assert region.is_binary

    def test_dilation_grows_the_region(self):
        template = self.template()
        region = atlas_region(template, TransportConfig(region_dilation=2)).as_bool()
        assert region[template.values > 0].all()
        assert region.sum() > (template.values > 0).sum()
        assert region[7, 7, 3] and not region[7, 7, 2]

    def test_flat_template_covers_everything(self):
        geometry = GridGeometry.centered((6, 6, 6), (1.0, 1.0, 1.0))
        region = atlas_region(ScalarVolume(geometry, np.full(geometry.shape, 2.0)))
        assert region.as_bool().all()


class TestTransportCohort:
    def atlas(self, geometry: GridGeometry, maps) -> Atlas:
        return Atlas(ScalarVolume(geometry, np.ones(geometry.shape)), maps)

    def test_identity_atlas_returns_the_input(self, grid):
        m = swirl_motion(grid)
        atlas = self.atlas(grid, {"sub-01": DiffeoField.identity(grid)})
        out = transport_cohort(atlas, {"sub-01": {"/s/": motion(m)}}, RegionMask.full(grid), ["/s/"])
        np.testing.assert_allclose(out["sub-01"].frames["/s/"].vectors, m.vectors, atol=1e-12)

    def test_subjects_follow_atlas_order(self, grid):
        maps = {sid: DiffeoField.identity(grid) for sid in ("sub-02", "sub-01")}
        motions = {sid: {"/s/": DiffeoField.identity(grid)} for sid in ("sub-01", "sub-02")}
        out = transport_cohort(self.atlas(grid, maps), motions, RegionMask.full(grid), ["/s/"], max_workers=2)
        assert list(out) == ["sub-02", "sub-01"]

    def test_missing_subject(self, grid):
        atlas = self.atlas(grid, {"sub-01": DiffeoField.identity(grid)})
        with pytest.raises(ManifestError):
            transport_cohort(atlas, {}, RegionMask.full(grid), ["/s/"])

    def test_missing_label(self, grid):
        atlas = self.atlas(grid, {"sub-01": DiffeoField.identity(grid)})
        with pytest.raises(ManifestError):
            transport_cohort(atlas, {"sub-01": {"/s/": DiffeoField.identity(grid)}}, RegionMask.full(grid), ["/u/"])


class TestStrainConsistency:
    def test_strain_correlates_before_and_after_transport(self, grid):
        inner = interior_mask(grid.dims, 4)
        atlas_map = affine_map(grid)
        subject_space, atlas_space = [], []
        for gamma in (0.02, 0.05, 0.08, 0.11, 0.14):
            shear = IncompressibleShear(gamma=gamma, schedule=[0.0, 1.0])
            m = VectorVolume(grid, shear.displacement(grid))
            transported = conjugate_field(motion(m), atlas_map, RegionMask.full(grid))
            subject_space.append(float(strain(m).eigenvalues[..., 0][inner].mean()))
            atlas_space.append(float(strain(transported).eigenvalues[..., 0][inner].mean()))
        assert strain_consistency(subject_space, atlas_space) > 0.95

    def test_perfect_and_undefined_correlation(self):
        assert strain_consistency([0.1, 0.2, 0.3], [1.0, 2.0, 3.0]) == pytest.approx(1.0)
        assert np.isnan(strain_consistency([0.1, 0.1, 0.1], [1.0, 2.0, 3.0]))

    def test_needs_matching_series(self):
        with pytest.raises(ValueError):
            strain_consistency([0.1, 0.2], [0.1])
