"""
# src/tests/test_pvira.py

Velocity update, masked projection, the exponential map and end-to-end tracking on phantoms

速度更新, 掩膜投影, 指数映射以及体模上的端到端追踪
"""


from typing import Dict

import numpy as np
import pytest

from src.config import EllipsoidSpec, GeometrySpec, PhantomSpec, PviraConfig
from src.domains.entities import DiffeoField, PhasePair
from src.domains.services import (
    combine_masks,
    exponentiate,
    extract_phase,
    generate_tagged,
    ground_truth_displacement,
    incompressibility_project,
    interior_divergence,
    track,
    track_frame,
    velocity_update,
    wrap,
)
from src.domains.services.deformations import AnalyticDeformation, DivergenceFreeSwirl, Translation
from src.infrastructure.errors import ShapeMismatchError
from src.infrastructure.fieldcore import (
    GridGeometry,
    RegionMask,
    ScalarVolume,
    VectorVolume,
    divergence_array,
    interior_mask,
)


ORIENTATIONS = ("a", "s", "c")


def tone_pairs(geometry: GridGeometry, omega: float, shift=(0.0, 0.0, 0.0), offset: float = 0.0, gain: float = 1.0):
    """
    orientation -> (reference, moving) phase pairs of three orthogonal linear phases; moving is shifted by ``shift``
    """
    points = geometry.grid_points()
    axes = {"s": 0, "c": 1, "a": 2}
    out = {}
    for o in ORIENTATIONS:
        axis = axes[o]
        magnitude = ScalarVolume(geometry, np.full(geometry.shape, 0.5 * gain))
        ref = ScalarVolume(geometry, wrap(omega * points[..., axis] + offset))
        mov = ScalarVolume(geometry, wrap(omega * (points[..., axis] - shift[axis]) + offset))
        out[o] = (PhasePair(ref, magnitude), PhasePair(mov, magnitude))
    return out


def phantom_phases(spec: PhantomSpec, deformation: AnalyticDeformation) -> Dict[int, Dict[str, PhasePair]]:
    frames = {o: generate_tagged(spec, deformation, o) for o in ORIENTATIONS}
    return {
        t: {o: extract_phase(frames[o][t], o, spec.tag_period_mm) for o in ORIENTATIONS}
        for t in range(spec.frames)
    }


def tracking_spec(**overrides) -> PhantomSpec:
    values = dict(
        geometry=GeometrySpec(dims=(32, 32, 32), spacing=(2.0, 2.0, 2.0)),
        tag_period_mm=10.0,
        ellipsoid=EllipsoidSpec(radii=(26.0, 24.0, 22.0)),
        frames=2,
        noise_sigma=0.0,
        fade=1.0,
    )
    values.update(overrides)
    return PhantomSpec(**values)


def tracking_config() -> PviraConfig:
    return PviraConfig(iterations=60, fluid_sigma_voxels=1.0, diffusion_sigma_voxels=0.5)


class TestVelocityUpdate:
    def test_equal_phases_give_zero(self):
        geometry = GridGeometry(dims=(16, 16, 16), spacing=(1.0, 1.0, 1.0))
        pairs = tone_pairs(geometry, 0.6)
        same = {o: (ref, ref) for o, (ref, _) in pairs.items()}
        np.testing.assert_array_equal(velocity_update(same, None, PviraConfig()).vectors, 0.0)

    def test_update_points_along_the_shift(self):
        geometry = GridGeometry(dims=(16, 16, 16), spacing=(1.0, 1.0, 1.0))
        update = velocity_update(tone_pairs(geometry, 0.6, shift=(0.5, 0.0, 0.0)), None, PviraConfig()).vectors
        inner = interior_mask(geometry.dims, 2)
        assert np.all(update[inner][:, 0] > 0.0)
        np.testing.assert_allclose(update[inner][:, 1:], 0.0, atol=1e-12)

    def test_magnitudes_do_not_matter(self):
        geometry = GridGeometry(dims=(12, 12, 12), spacing=(1.0, 1.0, 1.0))
        first = velocity_update(tone_pairs(geometry, 0.7, shift=(0.3, -0.2, 0.1)), None, PviraConfig())
        second = velocity_update(tone_pairs(geometry, 0.7, shift=(0.3, -0.2, 0.1), gain=2.0), None, PviraConfig())
        np.testing.assert_array_equal(first.vectors, second.vectors)

    def test_constant_phase_offset_invariance(self):
        geometry = GridGeometry(dims=(12, 12, 12), spacing=(1.0, 1.0, 1.0))
        first = velocity_update(tone_pairs(geometry, 0.7, shift=(0.3, -0.2, 0.1)), None, PviraConfig())
        second = velocity_update(tone_pairs(geometry, 0.7, shift=(0.3, -0.2, 0.1), offset=1.3), None, PviraConfig())
        np.testing.assert_allclose(first.vectors, second.vectors, atol=1e-9)

    def test_current_warp_is_applied(self):
        geometry = GridGeometry(dims=(16, 16, 16), spacing=(1.0, 1.0, 1.0))
        shift = (0.5, 0.0, 0.0)
        warp = DiffeoField(
            VectorVolume(geometry, np.broadcast_to(shift, geometry.shape + (3,))),
            VectorVolume(geometry, np.broadcast_to([-0.5, 0.0, 0.0], geometry.shape + (3,))),
        )
        update = velocity_update(tone_pairs(geometry, 0.6, shift=shift), warp, PviraConfig()).vectors
        inner = interior_mask(geometry.dims, 2)
        assert np.abs(update[inner]).max() < 1e-8

    def test_geometry_mismatch(self):
        geometry = GridGeometry(dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0))
        other = GridGeometry(dims=(8, 8, 9), spacing=(1.0, 1.0, 1.0))
        pairs = tone_pairs(geometry, 0.6)
        pairs["a"] = tone_pairs(other, 0.6)["a"]
        with pytest.raises(ShapeMismatchError):
            velocity_update(pairs, None, PviraConfig())


class TestProjection:
    def periodic_geometry(self) -> GridGeometry:
        return GridGeometry(dims=(16, 16, 16), spacing=(1.0, 1.0, 1.0))

    def test_divergence_free_field_unchanged(self):
        geometry = self.periodic_geometry()
        x = geometry.grid_points()
        psi = np.cos(2 * np.pi * x[..., 0] / 16) * np.sin(2 * np.pi * x[..., 2] / 16)
        d = lambda f, a: (np.roll(f, -1, a) - np.roll(f, 1, a)) / 2.0
        field = np.stack([d(psi, 2), np.zeros_like(psi), -d(psi, 0)], axis=-1)
        out = incompressibility_project(VectorVolume(geometry, field), RegionMask.full(geometry)).vectors
        assert np.abs(out - field).max() <= 1e-8 * np.abs(field).max()

    def test_gradient_field_removed(self):
        geometry = self.periodic_geometry()
        x = geometry.grid_points()
        psi = np.sin(2 * np.pi * x[..., 1] / 16) + 0.5 * np.cos(2 * np.pi * (x[..., 0] + x[..., 2]) / 16)
        grad = np.stack([(np.roll(psi, -1, a) - np.roll(psi, 1, a)) / 2.0 for a in range(3)], axis=-1)
        out = incompressibility_project(VectorVolume(geometry, grad), RegionMask.full(geometry)).vectors
        np.testing.assert_allclose(out, 0.0, atol=1e-10)

    def test_empty_mask_is_identity(self, rng):
        geometry = self.periodic_geometry()
        field = rng.normal(size=geometry.shape + (3,))
        out = incompressibility_project(VectorVolume(geometry, field), RegionMask.full(geometry, 0.0)).vectors
        np.testing.assert_array_equal(out, field)

    def test_divergence_vanishes_inside_a_full_mask(self, rng):
        geometry = self.periodic_geometry()
        field = rng.normal(size=geometry.shape + (3,))
        out = incompressibility_project(VectorVolume(geometry, field), RegionMask.full(geometry)).vectors
        inner = interior_mask(geometry.dims, 1)
        assert np.abs(divergence_array(out, geometry)[inner]).max() < PviraConfig().div_tolerance

    def test_partial_mask_interior_meets_the_tolerance(self, rng):
        geometry = self.periodic_geometry()
        points = geometry.grid_points()
        center = np.asarray(geometry.dims, dtype=np.float64) / 2.0
        mask = np.linalg.norm(points - center, axis=-1) < 5.0
        field = rng.normal(size=geometry.shape + (3,))
        tolerance = PviraConfig().div_tolerance
        assert interior_divergence(field, mask, geometry) > tolerance
        out = incompressibility_project(VectorVolume(geometry, field), RegionMask.from_bool(geometry, mask)).vectors
        assert interior_divergence(out, mask, geometry) < tolerance

    def test_interior_of_an_empty_mask(self, rng):
        geometry = self.periodic_geometry()
        field = rng.normal(size=geometry.shape + (3,))
        assert interior_divergence(field, np.zeros(geometry.shape, dtype=bool), geometry) == 0.0


class TestExponentiate:
    def test_zero_velocity(self, geometry):
        motion = exponentiate(VectorVolume.zeros(geometry))
        np.testing.assert_array_equal(motion.forward.vectors, 0.0)
        np.testing.assert_array_equal(motion.inverse.vectors, 0.0)

    def test_constant_velocity_is_a_translation(self, geometry):
        c = np.array([2.4, -1.1, 0.7])
        motion = exponentiate(VectorVolume(geometry, np.broadcast_to(c, geometry.shape + (3,))))
        np.testing.assert_allclose(motion.forward.vectors, np.broadcast_to(c, geometry.shape + (3,)), atol=1e-12)
        np.testing.assert_allclose(motion.inverse.vectors, np.broadcast_to(-c, geometry.shape + (3,)), atol=1e-12)

    def test_inverse_consistency_of_a_smooth_field(self):
        geometry = GridGeometry.centered((24, 24, 24), (1.0, 1.0, 1.0))
        x = geometry.grid_points()
        bump = np.exp(-np.sum(x ** 2, axis=-1) / (2.0 * 4.0 ** 2))
        velocity = np.stack([-x[..., 1], x[..., 0], 0.5 * np.ones_like(bump) * 4.0], axis=-1) * bump[..., None]
        velocity *= 2.0 / np.linalg.norm(velocity, axis=-1).max()
        motion = exponentiate(VectorVolume(geometry, velocity))
        assert motion.inverse_consistency() < 0.05
        assert motion.jacobian_determinant().min() > 0.0


class TestTracking:
    def test_identity_motion(self):
        spec = tracking_spec(geometry=GeometrySpec(dims=(20, 20, 20), spacing=(2.0, 2.0, 2.0)),
                             ellipsoid=EllipsoidSpec(radii=(14.0, 13.0, 12.0)))
        phases = phantom_phases(spec, Translation(schedule=[0.0, 0.0]))
        mask = combine_masks([phases[0][o].magnitude for o in ORIENTATIONS])
        result = track_frame(phases[0], phases[1], mask, PviraConfig(iterations=5), spec.tag_period_mm)
        spacing = np.asarray(spec.geometry.spacing)
        assert np.sqrt(np.mean(np.sum((result.motion.forward.vectors / spacing) ** 2, axis=-1))) < 0.02
        assert result.log and set(result.log[0]) == {
            "level", "iteration", "update_rms_voxels", "mean_abs_div", "projected_max_div", "phase_energy",
        }
        assert result.incompressible
        assert max(row["projected_max_div"] for row in result.log) < PviraConfig().div_tolerance

    def test_track_keeps_frame_order(self):
        spec = tracking_spec(geometry=GeometrySpec(dims=(16, 16, 16), spacing=(2.0, 2.0, 2.0)),
                             ellipsoid=EllipsoidSpec(radii=(11.0, 10.0, 9.0)), frames=3)
        deformation = DivergenceFreeSwirl(angle_deg=35.0, width_mm=5.0, schedule=[0.0, 0.0, 1.0])
        truth = ground_truth_displacement(deformation, 2, spec.geometry.to_geometry()).vectors
        phases = phantom_phases(spec, deformation)
        mask = combine_masks([phases[0][o].magnitude for o in ORIENTATIONS])
        cfg = PviraConfig(iterations=30, diffusion_sigma_voxels=0.5)
        results = track(phases[0], [phases[1], phases[2]], mask, cfg, spec.tag_period_mm, max_workers=2)

        inside = mask.as_bool()
        assert np.abs(results[0].motion.forward.vectors[inside]).max() < 1e-6
        error = np.linalg.norm(results[1].motion.forward.vectors - truth, axis=-1)[inside]
        size = np.linalg.norm(truth, axis=-1)[inside]
        assert np.sqrt(np.mean(error ** 2)) < 0.5 * np.sqrt(np.mean(size ** 2))
        with pytest.raises(ValueError):
            track(phases[0], [], mask, cfg, spec.tag_period_mm)

    @pytest.mark.slow
    @pytest.mark.parametrize("fade, noise", [(1.0, 0.0), (0.7, 0.02)])
    def test_swirl_error_below_a_third_of_a_voxel(self, fade, noise):
        spec = tracking_spec(fade=fade, noise_sigma=noise, seed=11)
        geometry = spec.geometry.to_geometry()
        # 1.5 voxel peak displacement at r = width
        width = 10.0
        angle = np.rad2deg(1.5 * geometry.min_spacing / (width * np.exp(-0.5)))
        deformation = DivergenceFreeSwirl(angle_deg=angle, width_mm=width, height_mm=20.0, schedule=[0.0, 1.0])
        truth = ground_truth_displacement(deformation, 1, geometry).vectors
        assert np.linalg.norm(truth, axis=-1).max() / geometry.min_spacing == pytest.approx(1.5, rel=0.05)

        phases = phantom_phases(spec, deformation)
        mask = combine_masks([phases[0][o].magnitude for o in ORIENTATIONS])
        result = track_frame(phases[0], phases[1], mask, tracking_config(), spec.tag_period_mm)

        inside = mask.as_bool()
        error = np.linalg.norm((result.motion.forward.vectors - truth) / np.asarray(geometry.spacing), axis=-1)[inside]
        assert np.sqrt(np.mean(error ** 2)) < 1.0 / 3.0

        det = result.motion.jacobian_determinant()[inside & interior_mask(geometry.dims, 1)]
        assert det.min() > 0.0
        assert np.mean(np.abs(det - 1.0)) < 0.05
