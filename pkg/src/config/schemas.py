"""
# src/config/schemas.py

Versioned JSON documents of a run: phantom / cohort specs, per-stage configs, RunConfig and CohortManifest

一次运行所用的带版本 JSON 文档: 体模与队列描述, 各阶段配置, RunConfig 与 CohortManifest
"""


from __future__ import annotations
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple
import json
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from src.infrastructure.utils.hashing import canonical_json, hash_document
from .settings import CONFIG


logger = logging.getLogger(__name__)

Triple = Tuple[float, float, float]
SchemaVersion = Literal[1]


class _Document(BaseModel):
    """
    Strict, frozen JSON document with a canonical serialized form
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    def canonical_json(self) -> str:
        return canonical_json(self.model_dump(mode="json"))

    def config_hash(self) -> str:
        return hash_document(self.model_dump(mode="json"))


# ---------------------------------------------------------------- phantom

class GeometrySpec(_Document):
    dims: Tuple[int, int, int] = (CONFIG["PHANTOM_DIM"],) * 3
    spacing: Triple = (CONFIG["PHANTOM_SPACING_MM"],) * 3
    origin: Optional[Triple] = None # None -> grid centered on the world origin

    @field_validator("dims")
    @classmethod
    def _dims(cls, value):
        if min(value) < 2:
            raise ValueError(f"all dims must be >= 2, got {value}")
        return value

    @field_validator("spacing")
    @classmethod
    def _spacing(cls, value):
        if min(value) <= 0:
            raise ValueError(f"all spacings must be > 0, got {value}")
        return value

    def to_geometry(self):
        from src.infrastructure.fieldcore import GridGeometry

        if self.origin is None:
            return GridGeometry.centered(self.dims, self.spacing)
        return GridGeometry(dims=self.dims, spacing=self.spacing, origin=self.origin)


class EllipsoidSpec(_Document):
    center: Triple = (0.0, 0.0, 0.0)
    radii: Triple = (36.0, 30.0, 26.0)

    @field_validator("radii")
    @classmethod
    def _radii(cls, value):
        if min(value) <= 0:
            raise ValueError(f"ellipsoid radii must be > 0, got {value}")
        return value


class DeformationSpec(_Document):
    """
    One analytic deformation kind with its parameters; ``parts`` only for kind "composed"
    """

    kind: str
    params: Dict[str, Any] = Field(default_factory=dict)
    parts: List["DeformationSpec"] = Field(default_factory=list)


class PhantomSpec(_Document):
    version: SchemaVersion = 1
    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    tag_period_mm: float = CONFIG["PHANTOM_TAG_PERIOD_MM"]
    ellipsoid: EllipsoidSpec = Field(default_factory=EllipsoidSpec)
    noise_sigma: float = Field(default=CONFIG["PHANTOM_NOISE_SIGMA"], ge=0.0) # Fraction of the tag amplitude
    fade: float = Field(default=CONFIG["PHANTOM_FADE"], gt=0.0, le=1.0)
    frames: int = Field(default=CONFIG["PHANTOM_FRAMES"], ge=1)
    seed: int = CONFIG["SEED"]
    amplitudes: Optional[List[float]] = None # None -> linear ramp 0..1 over the frames

    @model_validator(mode="after")
    def _check(self):
        limit = 2.0 * max(self.geometry.spacing)
        if not self.tag_period_mm > limit:
            raise ValueError(f"tag period {self.tag_period_mm} mm must exceed 2 x max spacing = {limit} mm")
        if self.amplitudes is not None:
            if len(self.amplitudes) != self.frames:
                raise ValueError(f"amplitude schedule has {len(self.amplitudes)} entries for {self.frames} frames")
            if self.amplitudes[0] != 0.0:
                raise ValueError("amplitude of the reference frame must be 0")
        return self

    def amplitude(self, t: int) -> float:
        if self.amplitudes is not None:
            return float(self.amplitudes[t])
        return 0.0 if self.frames == 1 else t / (self.frames - 1)


def default_frame_map(frames: int, labels: Optional[List[str]] = None) -> Dict[str, int]:
    """
    Spread the labels evenly over frames 1..T-1
    """
    labels = list(labels or CONFIG["FRAME_LABELS"])
    if frames < 2:
        return {}
    last = frames - 1
    count = len(labels)
    return {
        label: (1 if count == 1 else int(round(1 + k * (last - 1) / (count - 1))))
        for k, label in enumerate(labels)
    }


class CohortSpec(_Document):
    version: SchemaVersion = 1
    phantom: PhantomSpec = Field(default_factory=PhantomSpec)
    subjects: int = Field(default=6, ge=1)
    motion: DeformationSpec = Field(
        default_factory=lambda: DeformationSpec(kind="divergence-free-swirl", params={"angle_deg": 8.0, "width_mm": 14.0})
    )
    anatomy_variation: float = Field(default=0.05, ge=0.0, lt=0.5) # Std of the random affine linear part
    anatomy_shift_mm: float = Field(default=1.5, ge=0.0)
    amplitude_variation: float = Field(default=0.15, ge=0.0, lt=1.0)
    frame_labels: Dict[str, int] = Field(default_factory=dict) # Empty -> spread over the sequence
    compare_subjects: List[str] = Field(default_factory=list)
    compare_motion_scale: float = Field(default=0.5, gt=0.0)

    @model_validator(mode="after")
    def _check(self):
        for label, index in self.frame_labels.items():
            if not 0 < index < self.phantom.frames:
                raise ValueError(f"frame label {label} -> {index} lies outside 1..{self.phantom.frames - 1}")
        ids = set(self.subject_ids())
        unknown = sorted(set(self.compare_subjects) - ids)
        if unknown:
            raise ValueError(f"compare_subjects names unknown subjects: {unknown}")
        return self

    def subject_ids(self) -> List[str]:
        return [f"sub-{k + 1:02d}" for k in range(self.subjects)]

    def labels(self) -> Dict[str, int]:
        return dict(self.frame_labels) if self.frame_labels else default_frame_map(self.phantom.frames)


# ---------------------------------------------------------------- stage configs

class HarpConfig(_Document):
    tag_period_mm: float = Field(default=CONFIG["PHANTOM_TAG_PERIOD_MM"], gt=0.0)
    threshold_fraction: float = Field(default=CONFIG["HARP_THRESHOLD_FRACTION"], gt=0.0, lt=1.0)
    bandwidth_ratio: float = Field(default=CONFIG["HARP_BANDWIDTH_RATIO"], gt=0.0)


class PviraConfig(_Document):
    K: Optional[float] = Field(default=None, gt=0.0) # mm^2, None -> (mean spacing)^2
    fluid_sigma_voxels: float = Field(default=CONFIG["PVIRA_FLUID_SIGMA_VOXELS"], ge=0.0)
    diffusion_sigma_voxels: float = Field(default=CONFIG["PVIRA_DIFFUSION_SIGMA_VOXELS"], ge=0.0)
    iterations: int = Field(default=CONFIG["PVIRA_ITERATIONS"], ge=1)
    pyramid_levels: int = Field(default=CONFIG["PVIRA_PYRAMID_LEVELS"], ge=1)
    div_tolerance: float = Field(default=CONFIG["PVIRA_DIV_TOLERANCE"], gt=0.0)
    epsilon_ratio: float = Field(default=CONFIG["PVIRA_EPSILON_RATIO"], gt=0.0)
    support_dilation: int = Field(default=CONFIG["PVIRA_SUPPORT_DILATION"], ge=0)
    min_voxels_per_period: float = Field(default=CONFIG["PVIRA_MIN_VOXELS_PER_PERIOD"], gt=2.0)
    convergence_tol: float = Field(default=CONFIG["PVIRA_CONVERGENCE_TOL"], ge=0.0)

    def normalization(self, mean_spacing: float) -> float:
        return float(self.K) if self.K is not None else float(mean_spacing) ** 2


class AtlasConfig(_Document):
    outer_iterations: int = Field(default=CONFIG["ATLAS_OUTER_ITERATIONS"], ge=1)
    cc_radius: int = Field(default=CONFIG["ATLAS_CC_RADIUS"], ge=1)
    affine_cc_radius: int = Field(default=CONFIG["ATLAS_AFFINE_CC_RADIUS"], ge=1)
    pyramid_levels: int = Field(default=CONFIG["ATLAS_PYRAMID_LEVELS"], ge=1)
    affine_rounds: int = Field(default=CONFIG["ATLAS_AFFINE_ROUNDS"], ge=1)
    affine_iterations: int = Field(default=CONFIG["ATLAS_AFFINE_ITERATIONS"], ge=1)
    deformable_iterations: int = Field(default=CONFIG["ATLAS_DEFORMABLE_ITERATIONS"], ge=1)
    step_voxels: float = Field(default=CONFIG["ATLAS_STEP_VOXELS"], gt=0.0)
    fluid_sigma_voxels: float = Field(default=CONFIG["ATLAS_FLUID_SIGMA_VOXELS"], ge=0.0)
    diffusion_sigma_voxels: float = Field(default=CONFIG["ATLAS_DIFFUSION_SIGMA_VOXELS"], ge=0.0)
    foreground_fraction: float = Field(default=CONFIG["ATLAS_FOREGROUND_FRACTION"], ge=0.0, lt=1.0)
    centering_iterations: int = Field(default=CONFIG["ATLAS_CENTERING_ITERATIONS"], ge=0)
    affine: bool = True


class TransportConfig(_Document):
    region_dilation: int = Field(default=CONFIG["TRANSPORT_REGION_DILATION"], ge=0)
    region_threshold: float = Field(default=CONFIG["TRANSPORT_REGION_THRESHOLD"], gt=0.0, lt=1.0)


class MechanicsConfig(_Document):
    region_mode: Literal["mask", "bbox"] = CONFIG["MECHANICS_REGION_MODE"]
    write_volumes: bool = CONFIG["MECHANICS_WRITE_VOLUMES"] # Tensor and eigen volumes per subject and frame


class PcaConfig(_Document):
    report_modes: int = Field(default=CONFIG["PCA_REPORT_MODES"], ge=1)
    mode_sigmas: List[float] = Field(default_factory=lambda: list(CONFIG["PCA_MODE_SIGMAS"]))
    rank_tolerance: float = Field(default=CONFIG["PCA_RANK_TOLERANCE"], gt=0.0)


class RunConfig(_Document):
    version: SchemaVersion = 1
    seed: int = CONFIG["SEED"]
    max_workers: int = Field(default=CONFIG["MAX_WORKERS"], ge=1)
    harp: HarpConfig = Field(default_factory=HarpConfig)
    pvira: PviraConfig = Field(default_factory=PviraConfig)
    atlas: AtlasConfig = Field(default_factory=AtlasConfig)
    transport: TransportConfig = Field(default_factory=TransportConfig)
    mechanics: MechanicsConfig = Field(default_factory=MechanicsConfig)
    pca: PcaConfig = Field(default_factory=PcaConfig)


# ---------------------------------------------------------------- manifest

def _resolve(raw: str, info: ValidationInfo) -> str:
    base = (info.context or {}).get("base_dir")
    path = Path(raw)
    if not path.is_absolute() and base is not None:
        path = Path(base) / path
    if (info.context or {}).get("check_files", True) and not path.is_file():
        raise ValueError(f"file not found: {path}")
    return str(path)


class SubjectEntry(_Document):
    id: str = Field(min_length=1)
    cine: str
    tagged: Dict[str, List[str]]
    frames: Dict[str, int]

    @field_validator("cine")
    @classmethod
    def _cine(cls, value: str, info: ValidationInfo) -> str:
        return _resolve(value, info)

    @field_validator("tagged")
    @classmethod
    def _tagged(cls, value: Dict[str, List[str]], info: ValidationInfo) -> Dict[str, List[str]]:
        return {orientation: [_resolve(p, info) for p in paths] for orientation, paths in value.items()}

    @model_validator(mode="after")
    def _check(self):
        for orientation in CONFIG["ORIENTATIONS"]:
            if orientation not in self.tagged:
                raise ValueError(f"subject {self.id} is missing tagged orientation '{orientation}'")
        extra = sorted(set(self.tagged) - set(CONFIG["ORIENTATIONS"]))
        if extra:
            raise ValueError(f"subject {self.id} has unknown orientations {extra}")
        lengths = {len(paths) for paths in self.tagged.values()}
        if len(lengths) != 1 or min(lengths) < 2:
            raise ValueError(f"subject {self.id} needs equally long tagged sequences of >= 2 frames, got {sorted(lengths)}")
        n = lengths.pop()
        for label, index in self.frames.items():
            if not 0 < index < n:
                raise ValueError(f"subject {self.id} frame {label} -> {index} lies outside 1..{n - 1}")
        return self

    @property
    def sequence_length(self) -> int:
        return len(next(iter(self.tagged.values())))


class CohortManifest(_Document):
    version: SchemaVersion = 1
    label_set: List[str] = Field(default_factory=lambda: list(CONFIG["FRAME_LABELS"]))
    subjects: List[SubjectEntry]
    compare_subjects: List[str] = Field(default_factory=list)
    output_dir: Optional[str] = None # Run directory when the caller names none

    @field_validator("output_dir")
    @classmethod
    def _output_dir(cls, value: Optional[str], info: ValidationInfo) -> Optional[str]:
        if value is None:
            return None
        base = (info.context or {}).get("base_dir")
        path = Path(value)
        if not path.is_absolute() and base is not None:
            path = Path(base) / path
        return str(path)

    @model_validator(mode="after")
    def _check(self):
        ids = [s.id for s in self.subjects]
        if not ids:
            raise ValueError("manifest lists no subjects")
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate subject ids in {ids}")
        for subject in self.subjects:
            unknown = sorted(set(subject.frames) - set(self.label_set))
            if unknown:
                raise ValueError(f"subject {subject.id} uses labels {unknown} outside the label set {self.label_set}")
        missing = sorted(set(self.compare_subjects) - set(ids))
        if missing:
            raise ValueError(f"compare_subjects names unknown subjects: {missing}")
        return self

    def subject(self, subject_id: str) -> SubjectEntry:
        for entry in self.subjects:
            if entry.id == subject_id:
                return entry
        raise KeyError(subject_id)

    def labels(self) -> List[str]:
        """
        Labels used by every subject, in label-set order
        """
        return [label for label in self.label_set if all(label in s.frames for s in self.subjects)]


def load_document(model: type, path, **context) -> Any:
    """
    Read a JSON document and validate it; relative paths resolve against the document's directory

    params
    ------
    model: type - one of the document classes of this module
    path: str | Path - JSON file
    context: extra validation context, e.g. check_files=False

    return
    ------
    Any - the validated model instance
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return model.model_validate(data, context={"base_dir": path.parent, **context})


def write_document(document: _Document, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(document.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


__all__ = [
    "GeometrySpec",
    "EllipsoidSpec",
    "DeformationSpec",
    "PhantomSpec",
    "CohortSpec",
    "default_frame_map",
    "HarpConfig",
    "PviraConfig",
    "AtlasConfig",
    "TransportConfig",
    "MechanicsConfig",
    "PcaConfig",
    "RunConfig",
    "SubjectEntry",
    "CohortManifest",
    "load_document",
    "write_document",
]
