"""
# src/infrastructure/io/volume_io.py

NIfTI-1 volume reader and writer: float32 little-endian payload, diagonal world affine,
vector fields stored as a 4D volume with components along the fourth axis.
The header geometry fields are float32; an exact float64 copy of spacing and origin
rides in a comment extension and wins on read when it agrees with the header

NIfTI-1 体数据读写: float32 小端数据, 对角世界坐标仿射, 向量场以第四维存储分量.
头文件中的几何字段为 float32; 间距与原点的 float64 副本写在注释扩展中, 与头文件一致时读取优先使用
"""


from __future__ import annotations
from pathlib import Path
from typing import Optional, Tuple, Union
import json
import logging

import nibabel as nib
import numpy as np

from src.config import CONFIG
from src.infrastructure.errors import VolumeCapacityError, VolumeFormatError
from src.infrastructure.fieldcore import GridGeometry, ScalarVolume, VectorVolume


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_PAYLOAD = np.dtype("<f4")
_COMMENT_ECODE = 6
_GEOMETRY_KEY = "motion_atlas_geometry"

Triple = Tuple[float, float, float]


def _check_capacity(shape: Tuple[int, ...]) -> None:
    limit = int(CONFIG["NIFTI_MAX_DIM"])
    if any(int(n) > limit for n in shape):
        logger.error(f"Volume shape {shape} exceeds the NIfTI-1 dimension limit {limit}")
        raise VolumeCapacityError(f"Volume shape {shape} exceeds the NIfTI-1 dimension limit {limit}")


def write_array(array: np.ndarray, geometry: GridGeometry, path: PathLike, description: str = "") -> Path:
    """
    Write a (nx, ny, nz) or (nx, ny, nz, k) array with the geometry's world affine

    params
    ------
    array: np.ndarray - samples laid out on geometry
    geometry: GridGeometry - provides pixdim and the qoffset fields
    path: PathLike - target .nii path, parent directories are created
    description: str - short tag placed in front of the world convention in descrip

    return
    ------
    Path - the written path
    """
    array = np.asarray(array)
    _check_capacity(array.shape)
    if array.shape[:3] != geometry.shape:
        raise VolumeFormatError("dim", f"array shape {array.shape} does not match geometry dims {geometry.dims}")

    header = nib.Nifti1Header(endianness="<")
    header.set_data_dtype(_PAYLOAD)
    header.set_xyzt_units(xyz="mm")
    image = nib.Nifti1Image(np.ascontiguousarray(array, dtype=_PAYLOAD), geometry.affine, header=header)
    image.set_qform(geometry.affine, code=1)
    image.set_sform(geometry.affine, code=1)
    descrip = f"{description} {CONFIG['WORLD_CONVENTION']}".strip()
    image.header["descrip"] = descrip[:79].encode("ascii", errors="replace")
    image.header.extensions.append(_geometry_extension(geometry))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nib.save(image, str(path))
    logger.debug(f"Wrote volume {array.shape} to {path}")
    return path


def _geometry_extension(geometry: GridGeometry) -> nib.nifti1.Nifti1Extension:
    record = {
        _GEOMETRY_KEY: {
            "spacing": [float(v) for v in geometry.spacing],
            "origin": [float(v) for v in geometry.origin],
        }
    }
    text = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return nib.nifti1.Nifti1Extension(_COMMENT_ECODE, text.encode("utf-8"))


def _extension_geometry(header: nib.Nifti1Header) -> Optional[Tuple[Triple, Triple]]:
    """
    (spacing, origin) from the float64 geometry extension, None when absent or unreadable
    """
    for extension in header.extensions:
        if extension.get_code() != _COMMENT_ECODE:
            continue
        content = extension.get_content()
        try:
            text = content.decode("utf-8") if isinstance(content, bytes) else str(content)
            record = json.loads(text.rstrip("\x00"))[_GEOMETRY_KEY]
            spacing = tuple(float(v) for v in record["spacing"])
            origin = tuple(float(v) for v in record["origin"])
        except (ValueError, KeyError, TypeError):
            continue
        if len(spacing) == 3 and len(origin) == 3:
            return spacing, origin
    return None


def _validated_header(path: Path) -> nib.Nifti1Header:
    try:
        with open(path, "rb") as f:
            header = nib.Nifti1Header.from_fileobj(f, check=False)
    except Exception as exc:
        logger.error(f"Unreadable NIfTI header in {path}: {exc}")
        raise VolumeFormatError("sizeof_hdr", f"unreadable header in {path}. Details: {exc}")

    if int(header["sizeof_hdr"]) != 348:
        raise VolumeFormatError("sizeof_hdr", f"expected 348, got {int(header['sizeof_hdr'])} in {path}")
    if header["magic"].item() not in (b"n+1", b"ni1"):
        raise VolumeFormatError("magic", f"not a NIfTI-1 file: {path}")

    dim = np.asarray(header["dim"], dtype=np.int64)
    if dim[0] not in (3, 4):
        raise VolumeFormatError("dim", f"dim[0] must be 3 or 4, got {dim[0]} in {path}")
    if np.any(dim[1:4] < 2) or (dim[0] == 4 and dim[4] < 1):
        raise VolumeFormatError("dim", f"invalid voxel counts {dim[1:dim[0] + 1].tolist()} in {path}")
    _check_capacity(tuple(dim[1:dim[0] + 1]))

    pixdim = np.asarray(header["pixdim"], dtype=np.float64)
    if not np.all(np.isfinite(pixdim[1:4])) or np.any(pixdim[1:4] <= 0):
        logger.error(f"Non-positive spacing {pixdim[1:4].tolist()} in {path}")
        raise VolumeFormatError("pixdim", f"spacing must be positive, got {pixdim[1:4].tolist()} in {path}")
    return header


def read_array(path: PathLike) -> Tuple[np.ndarray, GridGeometry]:
    """
    Read any 3D or 4D volume written by write_array

    return
    ------
    Tuple[np.ndarray, GridGeometry] - float64 samples and the grid geometry
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Volume file not found: {path}")
    header = _validated_header(path)
    dim = np.asarray(header["dim"], dtype=np.int64)
    spacing = tuple(float(v) for v in np.asarray(header["pixdim"], dtype=np.float64)[1:4])
    origin = (float(header["qoffset_x"]), float(header["qoffset_y"]), float(header["qoffset_z"]))

    image = nib.load(str(path))
    exact = _extension_geometry(image.header)
    if exact is not None:
        # float32 header fields are the reference, a stale extension is ignored
        if np.allclose(exact[0], spacing, rtol=1e-6, atol=0.0) and np.allclose(exact[1], origin, rtol=1e-6, atol=1e-6):
            spacing, origin = exact
        else:
            logger.warning(f"Geometry extension of {path} disagrees with the header, using the header")
    geometry = GridGeometry(dims=tuple(int(d) for d in dim[1:4]), spacing=spacing, origin=origin)
    values = np.asarray(image.dataobj, dtype=np.float64)
    return values, geometry


def write_volume(volume: Union[ScalarVolume, VectorVolume], path: PathLike, description: str = "") -> Path:
    if isinstance(volume, ScalarVolume):
        return write_array(volume.values, volume.geometry, path, description or "scalar")
    return write_array(volume.vectors, volume.geometry, path, description or "vector")


def read_volume(path: PathLike) -> Union[ScalarVolume, VectorVolume]:
    """
    Read a scalar (3D) or 3-component vector (4D) volume
    """
    values, geometry = read_array(path)
    if values.ndim == 3:
        return ScalarVolume(geometry, values)
    if values.ndim == 4 and values.shape[-1] == 3:
        return VectorVolume(geometry, values)
    raise VolumeFormatError("dim", f"{path} holds {values.shape[-1]} components, expected 1 or 3")


__all__ = ["write_array", "read_array", "write_volume", "read_volume"]
