"""
# src/domains/services/artifacts.py

Run-directory layout and the readers / writers of every stage artifact; stages only talk through these files

运行目录结构以及各阶段产物的读写; 各阶段之间只通过这些文件通信
"""


from __future__ import annotations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import json

import numpy as np

from src.config import CohortManifest
from src.domains.entities import AffineTransform, Atlas, DiffeoField, PhasePair
from src.infrastructure.fieldcore import RegionMask, ScalarVolume, VectorVolume
from src.infrastructure.io import read_volume, write_volume


PathLike = Union[str, Path]


def frame_tag(index: int) -> str:
    return f"t{index:02d}"


def label_slug(label: str, label_set: Sequence[str]) -> str:
    """
    File-system name of a frame label: its 1-based position in the label set
    """
    return f"frame{list(label_set).index(label) + 1}"


def write_json(document, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def read_json(path: PathLike):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


### VOLUMES

def read_scalar(path: PathLike) -> ScalarVolume:
    volume = read_volume(path)
    if not isinstance(volume, ScalarVolume):
        raise TypeError(f"{path} holds a vector volume, expected a scalar volume")
    return volume


def read_vector(path: PathLike) -> VectorVolume:
    volume = read_volume(path)
    if not isinstance(volume, VectorVolume):
        raise TypeError(f"{path} holds a scalar volume, expected a vector volume")
    return volume


def write_mask(mask: RegionMask, path: PathLike) -> Path:
    return write_volume(ScalarVolume(mask.geometry, mask.weights), path, "region mask")


def read_mask(path: PathLike) -> RegionMask:
    volume = read_scalar(path)
    return RegionMask(volume.geometry, np.clip(volume.values, 0.0, 1.0))


def write_diffeo(field: DiffeoField, forward_path: PathLike, inverse_path: PathLike) -> List[Path]:
    return [
        write_volume(field.forward, forward_path, "forward displacement"),
        write_volume(field.inverse, inverse_path, "inverse displacement"),
    ]


def read_diffeo(forward_path: PathLike, inverse_path: PathLike) -> DiffeoField:
    return DiffeoField(read_vector(forward_path), read_vector(inverse_path))


def write_phase(pair: PhasePair, phase_path: PathLike, magnitude_path: PathLike) -> List[Path]:
    return [
        write_volume(pair.phase, phase_path, "harmonic phase"),
        write_volume(pair.magnitude, magnitude_path, "harmonic magnitude"),
    ]


def read_phase(phase_path: PathLike, magnitude_path: PathLike) -> PhasePair:
    phase = read_scalar(phase_path)
    # float32 storage rounds values near +-pi outward
    values = np.where(phase.values >= np.pi, -np.pi, np.maximum(phase.values, -np.pi))
    return PhasePair(phase.with_values(values), read_scalar(magnitude_path))


### ATLAS

def write_atlas(atlas: Atlas, directory: PathLike) -> List[Path]:
    directory = Path(directory)
    written = [write_volume(atlas.template, directory / "template.nii", "atlas template")]
    for subject_id in atlas.subject_ids:
        written += write_diffeo(
            atlas.mappings[subject_id],
            directory / subject_id / "forward.nii",
            directory / subject_id / "inverse.nii",
        )
    written.append(write_json({sid: a.to_dict() for sid, a in atlas.affines.items()}, directory / "affines.json"))
    return written


def read_atlas(directory: PathLike, subject_ids: Sequence[str]) -> Atlas:
    directory = Path(directory)
    mappings = {
        sid: read_diffeo(directory / sid / "forward.nii", directory / sid / "inverse.nii")
        for sid in subject_ids
    }
    affines: Dict[str, AffineTransform] = {}
    affine_file = directory / "affines.json"
    if affine_file.is_file():
        affines = {
            sid: AffineTransform(np.asarray(d["matrix"]), np.asarray(d["translation"]))
            for sid, d in read_json(affine_file).items()
        }
    return Atlas(read_scalar(directory / "template.nii"), mappings, affines)


### MANIFEST INPUTS

def load_cine(manifest: CohortManifest) -> List[ScalarVolume]:
    return [read_scalar(entry.cine) for entry in manifest.subjects]


def load_tagged(manifest: CohortManifest, subject_id: str, orientation: str, index: int) -> ScalarVolume:
    return read_scalar(manifest.subject(subject_id).tagged[orientation][index])


def manifest_inputs(manifest: CohortManifest) -> Dict[str, str]:
    """
    Logical name -> path of every input file the manifest references
    """
    out: Dict[str, str] = {}
    for entry in manifest.subjects:
        out[f"{entry.id}/cine"] = entry.cine
        for orientation, paths in sorted(entry.tagged.items()):
            for index, path in enumerate(paths):
                out[f"{entry.id}/tagged/{orientation}/{frame_tag(index)}"] = path
    return out


def tracked_indices(manifest: CohortManifest, subject_id: str, labels: Optional[Sequence[str]] = None) -> List[int]:
    """
    Sorted frame indices the labelled frames of a subject point to
    """
    frames = manifest.subject(subject_id).frames
    labels = labels if labels is not None else manifest.labels()
    return sorted({frames[label] for label in labels})


__all__ = [
    "frame_tag",
    "label_slug",
    "write_json",
    "read_json",
    "read_scalar",
    "read_vector",
    "write_mask",
    "read_mask",
    "write_diffeo",
    "read_diffeo",
    "write_phase",
    "read_phase",
    "write_atlas",
    "read_atlas",
    "load_cine",
    "load_tagged",
    "manifest_inputs",
    "tracked_indices",
]
