"""
# src/domains/services/transport_service.py

Transport of subject-space motion into atlas material coordinates by conjugation with the atlas mapping

通过与图谱映射共轭, 把被试空间的运动变换到图谱物质坐标中
"""


from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Mapping, Optional, Sequence
import logging

import numpy as np
from scipy import ndimage, stats

from src.config import CONFIG, TransportConfig
from src.domains.entities import Atlas, DiffeoField, TransportedMotion
from src.infrastructure.errors import ManifestError
from src.infrastructure.fieldcore import RegionMask, ScalarVolume, VectorVolume, sample_array


logger = logging.getLogger(__name__)


def atlas_region(template: ScalarVolume, cfg: Optional[TransportConfig] = None) -> RegionMask:
    """
    Tissue region D of the atlas: template above a fraction of its range, dilated

    params
    ------
    template: ScalarVolume - atlas template, any intensity scale
    cfg: Optional[TransportConfig] - threshold fraction and dilation in voxels

    return
    ------
    RegionMask - binary D on the atlas geometry
    """
    cfg = cfg or TransportConfig()
    values = template.values
    low, high = float(values.min()), float(values.max())
    if high <= low:
        logger.warning("Flat atlas template, region D covers the whole grid")
        return RegionMask.full(template.geometry)
    selected = (values - low) / (high - low) >= cfg.region_threshold
    if cfg.region_dilation > 0:
        selected = ndimage.binary_dilation(selected, iterations=cfg.region_dilation)
    return RegionMask.from_bool(template.geometry, selected)


def conjugate_field(subject_motion: DiffeoField, atlas_map: DiffeoField, region: RegionMask) -> VectorVolume:
    """
    phi_i o m o phi_i^-1 as a displacement on the atlas grid, zero outside D

    y = phi_i^-1(x) pulls x into the subject, z = y + m(y) moves it, phi_i(z) returns to the atlas
    """
    geometry = region.geometry
    geometry.check_same(atlas_map.geometry, "atlas mapping and region")
    subject_geometry = subject_motion.geometry
    subject_geometry.check_same(atlas_map.geometry, "subject motion and atlas mapping")

    x = geometry.grid_points()
    y = x + atlas_map.inverse.vectors
    z = y + sample_array(subject_motion.forward.vectors, subject_geometry, y)
    out = z + sample_array(atlas_map.forward.vectors, geometry, z)
    displacement = np.where(region.as_bool()[..., None], out - x, 0.0)
    return VectorVolume(geometry, displacement)


def conjugate(
    subject_motion: DiffeoField,
    atlas_map: DiffeoField,
    region: RegionMask,
    label: str = "",
    subject_id: str = "",
) -> TransportedMotion:
    """
    Single-frame transport

    params
    ------
    subject_motion: DiffeoField - tracked motion on the subject grid, forward is Lagrangian u(X)
    atlas_map: DiffeoField - (phi_i, phi_i^-1) from the atlas
    region: RegionMask - D on the atlas geometry
    label: str - frame label the result is stored under
    subject_id: str - subject the motion belongs to

    return
    ------
    TransportedMotion - one frame
    """
    return TransportedMotion(subject_id, {label: conjugate_field(subject_motion, atlas_map, region)}, region)


def transport_subject(
    subject_id: str,
    motions: Mapping[str, DiffeoField],
    atlas: Atlas,
    region: RegionMask,
    labels: Sequence[str],
) -> TransportedMotion:
    atlas_map = atlas.mappings[subject_id]
    frames: Dict[str, VectorVolume] = {}
    for label in labels:
        if label not in motions:
            logger.error(f"Subject {subject_id} has no tracked motion for frame label {label}")
            raise ManifestError(f"Subject {subject_id} has no tracked motion for frame label {label}")
        frames[label] = conjugate_field(motions[label], atlas_map, region)
    return TransportedMotion(subject_id, frames, region)


def transport_cohort(
    atlas: Atlas,
    motions: Mapping[str, Mapping[str, DiffeoField]],
    region: Optional[RegionMask] = None,
    labels: Optional[Sequence[str]] = None,
    max_workers: Optional[int] = None,
) -> Dict[str, TransportedMotion]:
    """
    Conjugate every subject's labelled frames into the atlas

    params
    ------
    atlas: Atlas - template and per-subject mappings
    motions: Mapping[str, Mapping[str, DiffeoField]] - subject id -> frame label -> tracked motion
    region: Optional[RegionMask] - D, derived from the template when absent
    labels: Optional[Sequence[str]] - frame labels in output order, default CONFIG["FRAME_LABELS"]
    max_workers: Optional[int] - per-subject threads

    return
    ------
    Dict[str, TransportedMotion] - in the atlas subject order
    """
    labels = list(labels or CONFIG["FRAME_LABELS"])
    region = region or atlas_region(atlas.template)
    missing = [sid for sid in atlas.subject_ids if sid not in motions]
    unknown = [sid for sid in motions if sid not in atlas.mappings]
    if missing or unknown:
        logger.error(f"Transport subjects disagree with the atlas: missing {missing}, unknown {unknown}")
        raise ManifestError(f"Transport subjects disagree with the atlas: missing {missing}, unknown {unknown}")

    with ThreadPoolExecutor(max_workers=max_workers or CONFIG["MAX_WORKERS"], thread_name_prefix="transport") as executor:
        futures = {
            sid: executor.submit(transport_subject, sid, motions[sid], atlas, region, labels)
            for sid in atlas.subject_ids
        }
        out = {sid: future.result() for sid, future in futures.items()}
    logger.info(f"Transported {len(out)} subjects x {len(labels)} frames into the atlas, |D| = {int(region.as_bool().sum())}")
    return out


def strain_consistency(subject_space: Sequence[float], atlas_space: Sequence[float]) -> float:
    """
    Pearson r between whole-region strain values computed before and after transport
    """
    a = np.asarray(subject_space, dtype=np.float64)
    b = np.asarray(atlas_space, dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise ValueError(f"Need two equal-length series of at least 2 values, got {a.shape} and {b.shape}")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        logger.warning("Constant strain series, correlation undefined")
        return float("nan")
    return float(stats.pearsonr(a, b)[0])


__all__ = [
    "atlas_region",
    "conjugate_field",
    "conjugate",
    "transport_subject",
    "transport_cohort",
    "strain_consistency",
]
