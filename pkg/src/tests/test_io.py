"""
# src/tests/test_io.py

Volume files, CSV tables, SVG figures and content hashes

体数据文件, CSV 表格, SVG 图与内容哈希
"""


import struct

import numpy as np
import pytest

from src.infrastructure.errors import VolumeCapacityError, VolumeFormatError
from src.infrastructure.fieldcore import GridGeometry, ScalarVolume, VectorVolume
from src.infrastructure.io import (
    quiver_mid_slice,
    read_array,
    read_table,
    read_volume,
    strain_bar_chart,
    write_array,
    write_table,
    write_volume,
)
from src.infrastructure.utils import canonical_json, hash_document, hash_file, hash_tree


# byte offset of pixdim[1] in the 348-byte NIfTI-1 header
PIXDIM_X_OFFSET = 80
# byte offset of qoffset_x
QOFFSET_X_OFFSET = 268


def float32_values(rng, shape):
    return rng.normal(size=shape).astype(np.float32).astype(np.float64)


class TestVolumeFiles:
    def test_scalar_roundtrip(self, tmp_path, anisotropic_geometry, rng):
        values = float32_values(rng, anisotropic_geometry.shape)
        path = write_volume(ScalarVolume(anisotropic_geometry, values), tmp_path / "scalar.nii")
        volume = read_volume(path)
        assert isinstance(volume, ScalarVolume)
        np.testing.assert_array_equal(volume.values, values)
        assert volume.geometry.dims == anisotropic_geometry.dims
        np.testing.assert_allclose(volume.geometry.spacing, anisotropic_geometry.spacing)
        np.testing.assert_allclose(volume.geometry.origin, anisotropic_geometry.origin)

    def test_geometry_survives_in_float64(self, tmp_path):
        geometry = GridGeometry(dims=(6, 5, 4), spacing=(0.7, 1.1, 0.9), origin=(0.1, -7.3, 1.0 / 3.0))
        volume = read_volume(write_volume(ScalarVolume(geometry, np.zeros(geometry.shape)), tmp_path / "exact.nii"))
        assert volume.geometry.spacing == geometry.spacing
        assert volume.geometry.origin == geometry.origin
        assert float(np.float32(geometry.origin[1])) != geometry.origin[1]

    def test_header_wins_over_a_stale_geometry_copy(self, tmp_path, geometry):
        path = write_volume(ScalarVolume(geometry, np.zeros(geometry.shape)), tmp_path / "edited.nii")
        data = bytearray(path.read_bytes())
        struct.pack_into("<f", data, QOFFSET_X_OFFSET, 5.0)
        path.write_bytes(bytes(data))
        assert read_volume(path).geometry.origin[0] == 5.0

    def test_vector_component_order(self, tmp_path, geometry):
        vectors = np.zeros(geometry.shape + (3,))
        vectors[..., 0], vectors[..., 1], vectors[..., 2] = 1.0, 2.0, 3.0
        volume = read_volume(write_volume(VectorVolume(geometry, vectors), tmp_path / "vector.nii"))
        assert isinstance(volume, VectorVolume)
        np.testing.assert_array_equal(volume.vectors[3, 4, 5], [1.0, 2.0, 3.0])

    def test_payload_is_little_endian_float32(self, tmp_path, geometry):
        path = write_volume(ScalarVolume(geometry, np.ones(geometry.shape)), tmp_path / "ones.nii")
        header = path.read_bytes()[:348]
        assert struct.unpack_from("<i", header, 0)[0] == 348
        # datatype 16 = float32
        assert struct.unpack_from("<h", header, 70)[0] == 16

    def test_negative_spacing_is_a_format_error(self, tmp_path, geometry):
        path = write_volume(ScalarVolume(geometry, np.ones(geometry.shape)), tmp_path / "bad.nii")
        data = bytearray(path.read_bytes())
        struct.pack_into("<f", data, PIXDIM_X_OFFSET, -1.5)
        path.write_bytes(bytes(data))
        with pytest.raises(VolumeFormatError) as info:
            read_volume(path)
        assert info.value.field == "pixdim"

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.nii"
        path.write_bytes(b"\x00" * 40)
        with pytest.raises(VolumeFormatError):
            read_array(path)

    def test_capacity(self, tmp_path):
        geometry = GridGeometry(dims=(2, 2, 2), spacing=(1.0, 1.0, 1.0))
        with pytest.raises(VolumeCapacityError):
            write_array(np.zeros((2, 2, 2, 40000), dtype=np.float32), geometry, tmp_path / "huge.nii")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_volume(tmp_path / "absent.nii")

    def test_rewrite_is_byte_identical(self, tmp_path, geometry, rng):
        volume = ScalarVolume(geometry, float32_values(rng, geometry.shape))
        a = write_volume(volume, tmp_path / "a.nii")
        b = write_volume(read_volume(a), tmp_path / "b.nii")
        assert a.read_bytes() == b.read_bytes()


class TestTables:
    def test_fixed_float_format(self, tmp_path):
        rows = [{"label": "/s/", "E1_mean": 0.1, "voxels": 12, "flag": True}, {"label": "/u/", "E1_mean": np.float64(-0.25)}]
        path = write_table(rows, ["label", "E1_mean", "voxels"], tmp_path / "t.csv", precision=3)
        assert path.read_text(encoding="utf-8").splitlines() == [
            "label,E1_mean,voxels",
            "/s/,0.100,12",
            "/u/,-0.250,",
        ]
        assert read_table(path)[1]["label"] == "/u/"


class TestFigures:
    def test_figures_are_deterministic(self, tmp_path):
        labels = ["/s/", "/u/"]
        values = {"/s/": [0.1, 0.0, -0.1], "/u/": [0.2, 0.05, -0.2]}
        sd = {label: [0.01, 0.01, 0.01] for label in labels}
        first = strain_bar_chart(labels, values, values, sd, "sub-01", tmp_path / "a.svg")
        second = strain_bar_chart(labels, values, values, sd, "sub-01", tmp_path / "b.svg")
        assert first.read_bytes() == second.read_bytes()
        assert first.read_text(encoding="utf-8").lstrip().startswith("<?xml")

    def test_quiver(self, tmp_path, rng):
        path = quiver_mid_slice(rng.normal(size=(8, 8, 8, 3)), (1.0, 1.0, 1.0), "mean", tmp_path / "q.svg", stride=2)
        assert path.stat().st_size > 0


class TestHashing:
    def test_canonical_json_sorts_keys(self):
        assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
        assert hash_document({"b": 1, "a": 2}) == hash_document({"a": 2, "b": 1})

    def test_tree_hash_tracks_content(self, tmp_path):
        (tmp_path / "d").mkdir()
        (tmp_path / "d" / "x.txt").write_text("one")
        (tmp_path / "d" / "y.txt").write_text("two")
        before = hash_tree([tmp_path / "d"], root=tmp_path)
        assert hash_file(tmp_path / "d" / "x.txt") != hash_file(tmp_path / "d" / "y.txt")
        (tmp_path / "d" / "y.txt").write_text("three")
        assert hash_tree([tmp_path / "d"], root=tmp_path) != before
