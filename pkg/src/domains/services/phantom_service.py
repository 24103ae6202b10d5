"""
# src/domains/services/phantom_service.py

Synthetic cohort generator: tagged volumes in three orientations and cine-like anatomy,
deformed by closed-form motion so every downstream stage has exact ground truth

合成队列生成器: 三个方向的标记体数据与类电影解剖体数据, 由解析运动形变, 为下游各阶段提供精确真值
"""


from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import json
import logging
import sys

import numpy as np
from tqdm import tqdm

from src.config import CONFIG, CohortSpec, CohortManifest, PhantomSpec, write_document
from src.infrastructure.errors import PhantomSpecError
from src.infrastructure.fieldcore import GridGeometry, ScalarVolume, VectorVolume
from src.infrastructure.io import write_volume
from .deformations import (
    AffineDeformation,
    AnalyticDeformation,
    ConjugatedDeformation,
    ScaledDeformation,
    build_deformation,
)


logger = logging.getLogger(__name__)


def orientation_axis(orientation: str) -> int:
    try:
        return int(CONFIG["ORIENTATION_AXES"][orientation])
    except KeyError:
        raise PhantomSpecError(f"Unknown tag orientation '{orientation}', expected one of {CONFIG['ORIENTATIONS']}")


def _smootherstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def normalized_radius(spec: PhantomSpec, points: np.ndarray) -> np.ndarray:
    """
    Ellipsoidal radius: 1 on the nominal tissue surface
    """
    center = np.asarray(spec.ellipsoid.center)
    radii = np.asarray(spec.ellipsoid.radii)
    return np.sqrt(np.sum(((points - center) / radii) ** 2, axis=-1))


def envelope(spec: PhantomSpec, points: np.ndarray) -> np.ndarray:
    """
    C2 ellipsoid shell: 1 inside, 0 outside, smootherstep across 1 -/+ shell width
    """
    width = CONFIG["PHANTOM_SHELL_WIDTH"]
    rho = normalized_radius(spec, points)
    return 1.0 - _smootherstep((rho - (1.0 - width)) / (2.0 * width))


def _anatomy(spec: PhantomSpec, points: np.ndarray) -> np.ndarray:
    center = np.asarray(spec.ellipsoid.center)
    radii = np.asarray(spec.ellipsoid.radii)
    rel = (points - center) / radii
    scale = float(np.mean(radii))

    def blob(offset, width):
        d = points - (center + np.asarray(offset) * radii)
        return np.exp(-np.sum(d ** 2, axis=-1) / (2.0 * (width * scale) ** 2))

    contrast = 0.55 + 0.2 * rel[..., 2] + 0.3 * blob((0.35, 0.2, 0.1), 0.25) - 0.2 * blob((-0.3, -0.25, 0.2), 0.2)
    return envelope(spec, points) * contrast


def _schedule_check(spec: PhantomSpec, deformation: AnalyticDeformation) -> None:
    if deformation.frames < spec.frames:
        raise PhantomSpecError(f"Deformation schedule has {deformation.frames} frames, phantom needs {spec.frames}")


def reference_points(spec: PhantomSpec, deformation: AnalyticDeformation, t: int) -> Tuple[GridGeometry, np.ndarray]:
    """
    Material coordinates X = def_t^-1(x) of every voxel center of frame t
    """
    geometry = spec.geometry.to_geometry()
    points = geometry.grid_points()
    s = deformation.amplitude(t)
    return geometry, (points if s == 0.0 else deformation.inverse(points, s))


def generate_tagged(
    spec: PhantomSpec,
    deformation: AnalyticDeformation,
    orientation: str,
    subject_shape: Optional[AnalyticDeformation] = None,
    stream: int = 0,
) -> List[ScalarVolume]:
    """
    Tagged sequence: I_t(x) = fade^t * env(X) * cos(2 pi X_axis / period) + noise, X = def_t^-1(x)

    params
    ------
    spec: PhantomSpec - geometry, tissue, tag period, noise, fade, frame count and seed
    deformation: AnalyticDeformation - motion in the subject's own coordinates
    orientation: str - "s", "c" or "a", selects the tag-normal axis x, y or z
    subject_shape: Optional[AnalyticDeformation] - static warp of the base anatomy, identity when absent
    stream: int - extra noise stream index so subjects draw independent noise

    return
    ------
    List[ScalarVolume] - frames 0..T-1
    """
    axis = orientation_axis(orientation)
    _schedule_check(spec, deformation)
    omega = 2.0 * np.pi / spec.tag_period_mm
    frames = []
    for t in range(spec.frames):
        geometry, material = reference_points(spec, deformation, t)
        anatomy_points = material if subject_shape is None else subject_shape.inverse(material)
        values = (spec.fade ** t) * envelope(spec, anatomy_points) * np.cos(omega * material[..., axis])
        if spec.noise_sigma > 0:
            rng = np.random.default_rng([spec.seed, stream, axis, t])
            values = values + spec.noise_sigma * rng.standard_normal(values.shape)
        frames.append(ScalarVolume(geometry, values))
    logger.debug(f"Generated {spec.frames} tagged frames, orientation {orientation}")
    return frames


def generate_cine(
    spec: PhantomSpec,
    deformation: AnalyticDeformation,
    subject_shape: Optional[AnalyticDeformation] = None,
    frames: Optional[int] = None,
) -> List[ScalarVolume]:
    """
    Untagged anatomy (envelope, internal gradient, two blobs) warped by subject_shape then
    animated by the deformation; no fade and no noise
    """
    _schedule_check(spec, deformation)
    out = []
    for t in range(spec.frames if frames is None else frames):
        geometry, material = reference_points(spec, deformation, t)
        anatomy_points = material if subject_shape is None else subject_shape.inverse(material)
        out.append(ScalarVolume(geometry, _anatomy(spec, anatomy_points)))
    return out


def ground_truth_displacement(deformation: AnalyticDeformation, t: int, geometry: GridGeometry) -> VectorVolume:
    """
    Exact Lagrangian displacement u(X) = def_t(X) - X at the voxel centers
    """
    s = deformation.amplitude(t)
    if s == 0.0:
        return VectorVolume.zeros(geometry)
    return VectorVolume(geometry, deformation.displacement(geometry, s))


def subject_anatomies(cohort: CohortSpec) -> Dict[str, Dict[str, Any]]:
    """
    Seeded random affine anatomy and motion amplitude factor of every subject
    """
    rng = np.random.default_rng([cohort.phantom.seed, 1])
    center = np.asarray(cohort.phantom.ellipsoid.center)
    out: Dict[str, Dict[str, Any]] = {}
    for subject_id in cohort.subject_ids():
        matrix = np.eye(3) + cohort.anatomy_variation * rng.standard_normal((3, 3))
        translation = cohort.anatomy_shift_mm * rng.standard_normal(3)
        factor = 1.0 + cohort.amplitude_variation * rng.uniform(-1.0, 1.0)
        if subject_id in cohort.compare_subjects:
            factor *= cohort.compare_motion_scale
        out[subject_id] = {
            "matrix": matrix.tolist(),
            "translation": translation.tolist(),
            "center": center.tolist(),
            "amplitude_factor": float(factor),
        }
    return out


def subject_deformations(cohort: CohortSpec, anatomy: Dict[str, Any]) -> Tuple[AnalyticDeformation, AnalyticDeformation]:
    """
    (subject_shape, subject-space motion) of one subject
    """
    schedule = [cohort.phantom.amplitude(t) for t in range(cohort.phantom.frames)]
    base = build_deformation(cohort.motion, schedule)
    shape = AffineDeformation(matrix=anatomy["matrix"], translation=anatomy["translation"], center=anatomy["center"])
    motion = ConjugatedDeformation(ScaledDeformation(base, anatomy["amplitude_factor"]), shape)
    return shape, motion


def _write_subject(cohort: CohortSpec, out_dir: Path, index: int, subject_id: str, anatomy: Dict[str, Any]) -> Dict[str, Any]:
    spec = cohort.phantom
    geometry = spec.geometry.to_geometry()
    shape, motion = subject_deformations(cohort, anatomy)
    subject_dir = out_dir / subject_id

    cine = generate_cine(spec, motion, shape, frames=1)[0]
    write_volume(cine, subject_dir / "cine.nii", "cine frame 0")

    tagged: Dict[str, List[str]] = {}
    for orientation in CONFIG["ORIENTATIONS"]:
        paths = []
        for t, frame in enumerate(generate_tagged(spec, motion, orientation, shape, stream=index)):
            path = subject_dir / "tagged" / orientation / f"t{t:02d}.nii"
            write_volume(frame, path, f"tagged {orientation}")
            paths.append(path.relative_to(out_dir).as_posix())
        tagged[orientation] = paths

    truth: Dict[str, str] = {}
    for t in range(1, spec.frames):
        path = subject_dir / "truth" / f"u_t{t:02d}.nii"
        write_volume(ground_truth_displacement(motion, t, geometry), path, "truth displacement")
        truth[str(t)] = path.relative_to(out_dir).as_posix()

    return {
        "entry": {
            "id": subject_id,
            "cine": (subject_dir / "cine.nii").relative_to(out_dir).as_posix(),
            "tagged": tagged,
            "frames": cohort.labels(),
        },
        "truth": {"anatomy": anatomy, "displacements": truth},
    }


def generate_cohort(
    cohort: CohortSpec,
    out_dir,
    max_workers: Optional[int] = None,
    seed: Optional[int] = None,
) -> Path:
    """
    Write a full phantom cohort with its ground truth and a ready-to-run manifest

    params
    ------
    cohort: CohortSpec - phantom, subject count, motion and anatomy variation
    out_dir: str | Path - target directory
    max_workers: Optional[int] - subject generation threads
    seed: Optional[int] - RunConfig.seed, replaces the phantom seed when given

    return
    ------
    Path - path of the written manifest.json
    """
    if seed is not None and seed != cohort.phantom.seed:
        logger.info(f"Phantom seed {cohort.phantom.seed} replaced by the run seed {seed}")
        cohort = cohort.model_copy(update={"phantom": cohort.phantom.model_copy(update={"seed": seed})})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    anatomies = subject_anatomies(cohort)
    subject_ids = cohort.subject_ids()
    logger.info(f"Generating phantom cohort of {len(subject_ids)} subjects into {out_dir}")

    base = generate_cine(cohort.phantom, build_deformation(cohort.motion, [0.0]), frames=1)[0]
    write_volume(base, out_dir / "base_anatomy.nii", "base anatomy")

    with ThreadPoolExecutor(
        max_workers=max_workers or CONFIG["MAX_WORKERS"], thread_name_prefix="phantom_subject"
    ) as executor:
        futures = [
            executor.submit(_write_subject, cohort, out_dir, k, sid, anatomies[sid])
            for k, sid in enumerate(subject_ids)
        ]
        results = [f.result() for f in tqdm(futures, desc="phantom", disable=not sys.stdout.isatty())]

    write_document(cohort, out_dir / "cohort_spec.json")
    truth = {
        "version": CONFIG["SCHEMA_VERSION"],
        "base_anatomy": "base_anatomy.nii",
        "frame_labels": cohort.labels(),
        "subjects": {sid: result["truth"] for sid, result in zip(subject_ids, results)},
    }
    (out_dir / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    manifest = CohortManifest.model_validate(
        {
            "version": 1,
            "subjects": [result["entry"] for result in results],
            "compare_subjects": list(cohort.compare_subjects),
        },
        context={"check_files": False},
    )
    manifest_path = write_document(manifest, out_dir / "manifest.json")
    logger.info(f"Phantom cohort written, manifest {manifest_path}")
    return manifest_path


__all__ = [
    "orientation_axis",
    "normalized_radius",
    "envelope",
    "generate_tagged",
    "generate_cine",
    "ground_truth_displacement",
    "subject_anatomies",
    "subject_deformations",
    "generate_cohort",
]
