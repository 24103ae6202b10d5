"""
# src/tests/test_statmodel.py

PCA motion models: Gram-matrix fit, reconstruction, mode fields and variance tables

PCA 运动模型: Gram 矩阵拟合, 重建, 模态场与方差表
"""


import numpy as np
import pytest
from scipy import linalg

from src.domains.entities import MotionSample, TransportedMotion, vector_to_volume
from src.domains.services import fit, fit_cohort, loadings_table, mode_fields, reconstruct, reconstruct_volume
from src.infrastructure.errors import SampleCountError, ShapeMismatchError
from src.infrastructure.fieldcore import GridGeometry, RegionMask, VectorVolume


def samples_from(rows, label: str = "/s/"):
    return [MotionSample(f"sub-{k + 1:02d}", label, np.asarray(row, dtype=np.float64)) for k, row in enumerate(rows)]


@pytest.fixture
def random_samples(rng):
    return samples_from(rng.normal(size=(8, 48)))


def planted_rows(dimension: int = 30, scales=(2.0, np.sqrt(2.0), 1.0)) -> np.ndarray:
    """
    8 samples whose loadings on 3 orthonormal directions are scaled Hadamard columns
    """
    hadamard = linalg.hadamard(8)[:, 1:4].astype(np.float64)
    directions = np.eye(dimension)[:3]
    center = np.linspace(-1.0, 1.0, dimension)
    return center + (hadamard * np.asarray(scales)) @ directions


class TestFit:
    def test_identical_samples(self):
        row = np.arange(12, dtype=np.float64)
        model = fit(samples_from([row] * 4))
        assert model.n_modes == 0
        np.testing.assert_array_equal(model.spectrum, 0.0)
        np.testing.assert_array_equal(model.mean, row)
        np.testing.assert_array_equal(reconstruct(model, []), row)

    def test_antisymmetric_pair(self):
        center = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        f = np.array([0.0, 3.0, 0.0, -4.0, 0.0, 0.0])
        model = fit(samples_from([center + f, center - f]))
        assert model.n_modes == 1
        np.testing.assert_allclose(model.components[:, 0], f / 5.0, atol=1e-12)
        np.testing.assert_allclose(model.loadings["sub-01"], [5.0], atol=1e-12)
        np.testing.assert_allclose(model.loadings["sub-02"], [-5.0], atol=1e-12)
        assert model.variances[0] == pytest.approx(50.0)

    def test_matches_the_dense_covariance(self, random_samples):
        model = fit(random_samples)
        data = np.stack([s.vector for s in random_samples])
        centered = data - data.mean(axis=0)
        covariance = centered.T @ centered / (len(data) - 1)
        dense_values, dense_vectors = np.linalg.eigh(covariance)
        dense_values, dense_vectors = dense_values[::-1][:7], dense_vectors[:, ::-1][:, :7]

        np.testing.assert_allclose(model.variances, dense_values, rtol=1e-8)
        np.testing.assert_allclose(model.components @ model.components.T, dense_vectors @ dense_vectors.T, atol=1e-8)

    def test_model_properties(self, random_samples):
        model = fit(random_samples)
        assert model.n_modes == len(random_samples) - 1
        np.testing.assert_allclose(model.components.T @ model.components, np.eye(model.n_modes), atol=1e-8)
        assert np.all(np.diff(model.variances) <= 0) and np.all(model.variances >= 0)
        np.testing.assert_allclose(np.mean(list(model.loadings.values()), axis=0), 0.0, atol=1e-10)

        data = np.stack([s.vector for s in random_samples])
        total = np.sum((data - data.mean(axis=0)) ** 2) / (len(data) - 1)
        assert float(np.sum(model.variances)) == pytest.approx(total, rel=1e-10)

        for sample in random_samples:
            rebuilt = reconstruct(model, model.loadings[sample.subject_id])
            assert np.linalg.norm(rebuilt - sample.vector) < 1e-8 * np.linalg.norm(sample.vector)

    def test_first_nonzero_entry_is_positive(self, random_samples):
        components = fit(random_samples).components
        for k in range(components.shape[1]):
            column = components[:, k]
            assert column[np.flatnonzero(np.abs(column) > 1e-12)[0]] > 0

    def test_subject_order_does_not_matter(self, random_samples):
        forward = fit(random_samples)
        backward = fit(list(reversed(random_samples)))
        np.testing.assert_allclose(forward.spectrum, backward.spectrum, rtol=1e-10)
        np.testing.assert_allclose(forward.components, backward.components, atol=1e-8)
        for sid in forward.subject_ids:
            np.testing.assert_allclose(forward.loadings[sid], backward.loadings[sid], atol=1e-8)

    def test_errors(self):
        with pytest.raises(SampleCountError):
            fit(samples_from([np.zeros(6)]))
        with pytest.raises(ShapeMismatchError):
            fit(samples_from([np.zeros(6), np.zeros(9)]))
        with pytest.raises(ValueError):
            fit([MotionSample("sub-01", "/s/", np.zeros(6)), MotionSample("sub-01", "/s/", np.ones(6))])


class TestReconstruct:
    def test_zero_coefficients_give_the_mean(self, random_samples):
        model = fit(random_samples)
        np.testing.assert_array_equal(reconstruct(model, np.zeros(3)), model.mean)

    def test_plus_minus_sigma_is_symmetric(self, random_samples):
        model = fit(random_samples)
        sigma = np.sqrt(model.variances[0])
        plus, minus = reconstruct(model, [sigma]), reconstruct(model, [-sigma])
        np.testing.assert_allclose(0.5 * (plus + minus), model.mean, atol=1e-12)

    def test_too_many_coefficients(self, random_samples):
        model = fit(random_samples)
        with pytest.raises(ValueError):
            reconstruct(model, np.zeros(model.n_modes + 1))

    def test_mode_fields(self, random_samples):
        model = fit(random_samples)
        fields = mode_fields(model, modes=2, sigmas=(-1.0, 1.0))
        assert sorted(fields) == [(1, -1.0), (1, 1.0), (2, -1.0), (2, 1.0)]
        expected = model.mean + np.sqrt(model.variances[1]) * model.components[:, 1]
        np.testing.assert_allclose(fields[(2, 1.0)], expected, atol=1e-12)

    def test_volume_scatter(self):
        geometry = GridGeometry.centered((4, 4, 4), (1.0, 1.0, 1.0))
        support = np.zeros(geometry.shape, dtype=bool)
        support[1:3, 1:3, 1:3] = True
        vectors = np.zeros(geometry.shape + (3,))
        vectors[support] = np.arange(24, dtype=np.float64).reshape(8, 3)
        sample = MotionSample.from_volume("sub-01", "/s/", VectorVolume(geometry, vectors), support)
        model = fit([sample, MotionSample("sub-02", "/s/", -sample.vector)])
        np.testing.assert_array_equal(reconstruct_volume(model, [0.0], support, geometry).vectors, 0.0)
        np.testing.assert_array_equal(vector_to_volume(sample.vector, support, geometry).vectors, vectors)
        with pytest.raises(ShapeMismatchError):
            vector_to_volume(sample.vector[:-3], support, geometry)


class TestLoadingsTable:
    def test_single_mode(self):
        center = np.zeros(6)
        f = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        row = loadings_table([fit(samples_from([center + f, center - f, center]))], modes=3)[0]
        assert row["label"] == "/s/" and row["PC1"] == pytest.approx(100.0)
        assert row["PC2"] == pytest.approx(0.0, abs=1e-9) and row["PC3"] == 0.0

    def test_two_equal_modes(self):
        e1, e2 = np.eye(6)[0], np.eye(6)[1]
        model = fit(samples_from([e1, -e1, e2, -e2]))
        row = loadings_table([model], modes=2)[0]
        assert row["PC1"] == pytest.approx(50.0) and row["PC2"] == pytest.approx(50.0)

    def test_planted_spectrum(self):
        model = fit(samples_from(planted_rows()))
        row = loadings_table([model], modes=3)[0]
        assert row["PC1"] == pytest.approx(400.0 / 7.0, abs=2.0)
        assert row["PC2"] == pytest.approx(200.0 / 7.0, abs=2.0)
        assert row["PC3"] == pytest.approx(100.0 / 7.0, abs=2.0)


class TestFitCohort:
    def cohort(self, rng, n: int = 4, labels=("/s/", "/u/")):
        geometry = GridGeometry.centered((5, 5, 5), (1.0, 1.0, 1.0))
        support = np.zeros(geometry.shape, dtype=bool)
        support[1:4, 1:4, 1:4] = True
        region = RegionMask.from_bool(geometry, support)
        out = {}
        for k in range(n):
            frames = {label: VectorVolume(geometry, rng.normal(size=geometry.shape + (3,))) for label in labels}
            out[f"sub-{k + 1:02d}"] = TransportedMotion(f"sub-{k + 1:02d}", frames, region)
        return out, support

    def test_models_per_label(self, rng):
        transported, support = self.cohort(rng)
        models, shared = fit_cohort(transported, ["/s/", "/u/"], max_workers=2)
        assert list(models) == ["/s/", "/u/"]
        np.testing.assert_array_equal(shared, support)
        assert models["/u/"].mean.size == 3 * int(support.sum())
        assert models["/s/"].subject_ids == ["sub-01", "sub-02", "sub-03", "sub-04"]

    def test_excluded_subjects_are_left_out(self, rng):
        transported, _ = self.cohort(rng)
        models, _ = fit_cohort(transported, ["/s/"], exclude=["sub-04"])
        assert "sub-04" not in models["/s/"].subject_ids and models["/s/"].n_modes == 2

    def test_too_few_subjects(self, rng):
        transported, _ = self.cohort(rng, n=2)
        with pytest.raises(SampleCountError):
            fit_cohort(transported, ["/s/"], exclude=["sub-02"])

    def test_regions_must_agree(self, rng):
        transported, support = self.cohort(rng, n=2)
        other = support.copy()
        other[0, 0, 0] = True
        motion = transported["sub-02"]
        transported["sub-02"] = TransportedMotion("sub-02", motion.frames, RegionMask.from_bool(motion.region.geometry, other))
        with pytest.raises(ShapeMismatchError):
            fit_cohort(transported, ["/s/"])
