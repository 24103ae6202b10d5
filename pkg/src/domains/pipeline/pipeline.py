"""
# src/domains/pipeline/pipeline.py

Define the handler of every pipeline state and wrap them in the core class MotionAtlasPipeline;
each stage is cached on the content hashes of its inputs and its config section

定义流水线每个状态的处理函数并包装在核心类 MotionAtlasPipeline 中; 每个阶段按输入内容哈希与配置段缓存
"""


from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional
import logging
import shutil

import numpy as np

from src.config import CONFIG, CohortManifest, RunConfig
from src.domains.entities import TransportedMotion, vector_to_volume
from src.domains.entities.execution_context import PipelineContext
from src.domains.pipeline.pipeline_states import PipelineState, StageType
from src.domains.services import (
    atlas_region,
    build_atlas,
    build_report,
    combine_masks,
    extract_phase,
    fit_cohort,
    frame_stats,
    loadings_table,
    mode_fields,
    strain_consistency,
    track,
    transport_cohort,
)
from src.domains.services.artifacts import (
    frame_tag,
    label_slug,
    load_cine,
    load_tagged,
    manifest_inputs,
    read_atlas,
    read_diffeo,
    read_json,
    read_mask,
    read_phase,
    read_vector,
    tracked_indices,
    write_atlas,
    write_diffeo,
    write_json,
    write_mask,
    write_phase,
)
from src.infrastructure.errors import ManifestError, StageError
from src.infrastructure.fieldcore import RegionMask
from src.infrastructure.io import write_array, write_table, write_volume
from src.infrastructure.utils import hash_document, hash_file


logger = logging.getLogger(__name__)

RECORD_NAME = ".stage.json"
STRAIN_ROW_COLUMNS = ["subject", "label", "space", "E1_mean", "E1_sd", "E2_mean", "E2_sd", "E3_mean", "E3_sd", "MD_mm", "voxels"]
PACKAGES = ["numpy", "scipy", "nibabel", "matplotlib", "pydantic", "typer", "python-dotenv", "tqdm"]
STAGE_ORDER = [
    StageType.VALIDATION,
    StageType.ATLAS,
    StageType.HARP,
    StageType.PVIRA,
    StageType.TRANSPORT,
    StageType.STRAIN,
    StageType.PCA,
    StageType.REPORT,
]
STATE_STAGES = {
    PipelineState.INITIALIZING: StageType.VALIDATION,
    PipelineState.BUILDING_ATLAS: StageType.ATLAS,
    PipelineState.EXTRACTING_PHASE: StageType.HARP,
    PipelineState.TRACKING_MOTION: StageType.PVIRA,
    PipelineState.TRANSPORTING: StageType.TRANSPORT,
    PipelineState.COMPUTING_STRAIN: StageType.STRAIN,
    PipelineState.FITTING_MODELS: StageType.PCA,
    PipelineState.REPORTING: StageType.REPORT,
}


def _package_versions() -> Dict[str, str]:
    versions = {}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class MotionAtlasPipeline:
    """
    Stage-caching state machine: validation, atlas, HARP, PVIRA, transport, strain, PCA, report
    """

    def __init__(
        self,
        manifest: CohortManifest,
        config: RunConfig,
        run_dir,
        stages: Optional[Iterable[StageType]] = None,
    ) -> None:
        """
        params
        ------
        manifest: CohortManifest - validated manifest with resolved paths
        config: RunConfig - every stage's parameters
        run_dir: str | Path - output directory, stage outputs live in one subdirectory per stage
        stages: Optional[Iterable[StageType]] - stages to run, all when absent; validation always runs
        """
        self.config = config
        self.selected = set(stages) if stages is not None else set(STAGE_ORDER)
        self.selected.add(StageType.VALIDATION)
        self.max_workers = config.max_workers

        # State Log -> context
        self.context = PipelineContext(
            current_state=PipelineState.INITIALIZING,
            manifest=manifest,
            config=config,
            run_dir=Path(run_dir),
        )
        self.input_hashes: Dict[str, str] = {}

        # State Mapping Table: From state to function
        self.state_handlers: Dict[PipelineState, Callable[[], PipelineState]] = {
            PipelineState.INITIALIZING: self._handle_initialization,
            PipelineState.BUILDING_ATLAS: self._handle_atlas,
            PipelineState.EXTRACTING_PHASE: self._handle_harp,
            PipelineState.TRACKING_MOTION: self._handle_pvira,
            PipelineState.TRANSPORTING: self._handle_transport,
            PipelineState.COMPUTING_STRAIN: self._handle_strain,
            PipelineState.FITTING_MODELS: self._handle_pca,
            PipelineState.REPORTING: self._handle_report,
        }

    @property
    def manifest(self) -> CohortManifest:
        return self.context.manifest

    @property
    def labels(self) -> List[str]:
        return self.manifest.labels()

    @property
    def subject_ids(self) -> List[str]:
        return [entry.id for entry in self.manifest.subjects]

    def _transition_state(self, new_state: PipelineState, context_data: Optional[Dict[str, Any]] = None) -> None:
        """
        Handle state transitions with logging
        """
        old_state = self.context.current_state
        self.context.current_state = new_state
        logger.info(f"Pipeline State Changes: {old_state.name} → {new_state.name}")
        self.context.add_execution_record(
            STATE_STAGES.get(old_state, StageType.VALIDATION),
            {"from_state": old_state.name, "to_state": new_state.name, "context_data": context_data},
        )

    ### STAGE CACHE
    def _record_path(self, stage: StageType) -> Path:
        return self.context.stage_dir(stage) / RECORD_NAME

    def _upstream(self, *stages: StageType) -> Dict[str, str]:
        """
        Output hashes recorded by finished upstream stages
        """
        inputs: Dict[str, str] = {}
        for stage in stages:
            record = self._record_path(stage)
            if not record.is_file():
                raise StageError(stage.directory, str(record), "upstream stage output missing, run that stage first")
            inputs.update(read_json(record)["outputs"])
        return inputs

    def _cached(self, stage: StageType, inputs: Dict[str, str], config_hash: str) -> bool:
        record_path = self._record_path(stage)
        if not record_path.is_file():
            return False
        record = read_json(record_path)
        if record.get("inputs") != inputs or record.get("config") != config_hash:
            return False
        for name, digest in record.get("outputs", {}).items():
            path = self.context.run_dir / name
            if not path.is_file() or hash_file(path) != digest:
                logger.info(f"Stage {stage.directory}: output {name} changed or missing")
                return False
        return True

    def _run_stage(
        self,
        stage: StageType,
        inputs: Dict[str, str],
        config_section: Any,
        work: Callable[[Path], List[Path]],
    ) -> None:
        """
        Run work(stage_dir) unless a matching record exists, then record the outputs

        params
        ------
        stage: StageType - stage being run
        inputs: Dict[str, str] - logical input name -> content hash
        config_section: Any - JSON-able parameters the outputs depend on
        work: Callable[[Path], List[Path]] - writes the outputs, returns their paths
        """
        config_hash = hash_document(config_section)
        stage_dir = self.context.stage_dir(stage)
        if self._cached(stage, inputs, config_hash):
            logger.info(f"Stage {stage.directory}: cache hit")
            self.context.cache_hits.append(stage.directory)
            self.context.stage_hashes[stage.directory] = hash_file(self._record_path(stage))
            return

        logger.info(f"Stage {stage.directory}: running")
        if stage_dir.exists():
            shutil.rmtree(stage_dir)
        stage_dir.mkdir(parents=True)
        try:
            written = work(stage_dir)
        except StageError:
            raise
        except Exception as exc:
            artifact = getattr(exc, "filename", None) or str(stage_dir)
            logger.error(f"Stage {stage.directory} failed: {exc}")
            raise StageError(stage.directory, str(artifact), str(exc)) from exc

        run_dir = self.context.run_dir
        outputs = {Path(p).relative_to(run_dir).as_posix(): hash_file(p) for p in written}
        record = {
            "stage": stage.directory,
            "config": config_hash,
            "inputs": inputs,
            "outputs": dict(sorted(outputs.items())),
        }
        write_json(record, self._record_path(stage))
        self.context.executed.append(stage.directory)
        self.context.stage_hashes[stage.directory] = hash_file(self._record_path(stage))
        self.context.add_execution_record(stage, {"outputs": len(outputs)})

    def _selected(self, stage: StageType) -> bool:
        if stage not in self.selected:
            logger.debug(f"Stage {stage.directory}: not selected")
            return False
        return True

    ### STATE FUNCTION
    # Startup Function
    def _handle_initialization(self) -> PipelineState:
        """
        Validate the cohort, hash every input, write provenance
        """
        logger.info("⁽⁽٩(๑˃̶͈̀ ᗨ ˂̶͈́)۶⁾⁾ Motion atlas pipeline has been launched")
        manifest = self.manifest
        labels = self.labels
        if not labels:
            raise ManifestError("No frame label is shared by every subject")
        controls = [sid for sid in self.subject_ids if sid not in manifest.compare_subjects]
        if StageType.PCA in self.selected and len(controls) < 2:
            raise ManifestError(f"Cohort statistics need at least 2 control subjects, got {controls}")

        self.context.run_dir.mkdir(parents=True, exist_ok=True)
        self.input_hashes = {name: hash_file(path) for name, path in manifest_inputs(manifest).items()}
        provenance = {
            "version": CONFIG["SCHEMA_VERSION"],
            "config_hash": self.config.config_hash(),
            "inputs": self.input_hashes,
            "packages": _package_versions(),
            "stages": [stage.directory for stage in STAGE_ORDER],
        }
        write_json(provenance, self.context.run_dir / "provenance.json")

        cohort = {
            "labels": labels,
            "label_set": list(manifest.label_set),
            "subjects": self.subject_ids,
            "compare_subjects": list(manifest.compare_subjects),
            "frames": {entry.id: {label: entry.frames[label] for label in labels} for entry in manifest.subjects},
        }

        def work(stage_dir: Path) -> List[Path]:
            return [
                write_json(cohort, stage_dir / "cohort.json"),
                write_json(self.config.model_dump(mode="json"), stage_dir / "run_config.json"),
            ]

        self._run_stage(StageType.VALIDATION, dict(self.input_hashes), {"cohort": cohort, "config": self.config.config_hash()}, work)
        return PipelineState.BUILDING_ATLAS

    def _handle_atlas(self) -> PipelineState:
        if self._selected(StageType.ATLAS):
            inputs = {f"{sid}/cine": self.input_hashes[f"{sid}/cine"] for sid in self.subject_ids}

            def work(stage_dir: Path) -> List[Path]:
                log: List[Dict[str, object]] = []
                atlas = build_atlas(load_cine(self.manifest), self.subject_ids, self.config.atlas, self.max_workers, log)
                written = write_atlas(atlas, stage_dir)
                written.append(write_table(log, ["phase", "round", "max_change", "mean_cc"], stage_dir / "convergence.csv"))
                return written

            self._run_stage(StageType.ATLAS, inputs, self.config.atlas.model_dump(mode="json"), work)
        return PipelineState.EXTRACTING_PHASE

    def _harp_subject(self, subject_id: str, stage_dir: Path) -> List[Path]:
        cfg = self.config.harp
        written: List[Path] = []
        reference_magnitudes = []
        for orientation in CONFIG["ORIENTATIONS"]:
            for index in [0] + tracked_indices(self.manifest, subject_id, self.labels):
                pair = extract_phase(
                    load_tagged(self.manifest, subject_id, orientation, index),
                    orientation, cfg.tag_period_mm, cfg.bandwidth_ratio,
                )
                folder = stage_dir / subject_id / orientation
                written += write_phase(pair, folder / f"phase_{frame_tag(index)}.nii", folder / f"magnitude_{frame_tag(index)}.nii")
                if index == 0:
                    reference_magnitudes.append(pair.magnitude)
        mask = combine_masks(reference_magnitudes, cfg.threshold_fraction)
        written.append(write_mask(mask, stage_dir / subject_id / "mask.nii"))
        return written

    def _handle_harp(self) -> PipelineState:
        if self._selected(StageType.HARP):
            inputs = {
                name: digest for name, digest in self.input_hashes.items()
                if "/tagged/" in name
            }

            def work(stage_dir: Path) -> List[Path]:
                with ThreadPoolExecutor(max_workers=self.max_workers, thread_name_prefix="harp_subject") as executor:
                    futures = [executor.submit(self._harp_subject, sid, stage_dir) for sid in self.subject_ids]
                    return [path for future in futures for path in future.result()]

            config = {"harp": self.config.harp.model_dump(mode="json"), "labels": self.labels}
            self._run_stage(StageType.HARP, inputs, config, work)
        return PipelineState.TRACKING_MOTION

    def _handle_pvira(self) -> PipelineState:
        if self._selected(StageType.PVIRA):
            inputs = self._upstream(StageType.HARP)
            harp_dir = self.context.stage_dir(StageType.HARP)
            orientations = CONFIG["ORIENTATIONS"]

            def phases(subject_id: str, index: int):
                folder = harp_dir / subject_id
                return {
                    o: read_phase(folder / o / f"phase_{frame_tag(index)}.nii", folder / o / f"magnitude_{frame_tag(index)}.nii")
                    for o in orientations
                }

            def work(stage_dir: Path) -> List[Path]:
                written: List[Path] = []
                for sid in self.subject_ids:
                    indices = tracked_indices(self.manifest, sid, self.labels)
                    results = track(
                        phases(sid, 0), [phases(sid, t) for t in indices], read_mask(harp_dir / sid / "mask.nii"),
                        self.config.pvira, self.config.harp.tag_period_mm, self.max_workers,
                    )
                    rows = []
                    for index, result in zip(indices, results):
                        tag = frame_tag(index)
                        written += write_diffeo(result.motion, stage_dir / sid / f"forward_{tag}.nii", stage_dir / sid / f"inverse_{tag}.nii")
                        rows += [{"frame": index, **row} for row in result.log]
                        if not result.converged:
                            logger.warning(f"PVIRA did not converge for {sid} frame {index}")
                        if not result.incompressible:
                            logger.warning(f"PVIRA divergence above tolerance for {sid} frame {index}")
                    columns = [
                        "frame", "level", "iteration", "update_rms_voxels", "mean_abs_div", "projected_max_div", "phase_energy",
                    ]
                    written.append(write_table(rows, columns, stage_dir / sid / "convergence.csv"))
                return written

            config = {"pvira": self.config.pvira.model_dump(mode="json"), "tag_period_mm": self.config.harp.tag_period_mm}
            self._run_stage(StageType.PVIRA, inputs, config, work)
        return PipelineState.TRANSPORTING

    def _tracked_motion(self, subject_id: str, label: str):
        index = self.manifest.subject(subject_id).frames[label]
        folder = self.context.stage_dir(StageType.PVIRA) / subject_id
        return read_diffeo(folder / f"forward_{frame_tag(index)}.nii", folder / f"inverse_{frame_tag(index)}.nii")

    def _handle_transport(self) -> PipelineState:
        if self._selected(StageType.TRANSPORT):
            inputs = self._upstream(StageType.ATLAS, StageType.PVIRA)
            label_set = self.manifest.label_set

            def work(stage_dir: Path) -> List[Path]:
                atlas = read_atlas(self.context.stage_dir(StageType.ATLAS), self.subject_ids)
                region = atlas_region(atlas.template, self.config.transport)
                written = [write_mask(region, stage_dir / "region.nii")]
                motions = {sid: {label: self._tracked_motion(sid, label) for label in self.labels} for sid in self.subject_ids}
                transported = transport_cohort(atlas, motions, region, self.labels, self.max_workers)
                for sid, motion in transported.items():
                    for label, volume in motion.frames.items():
                        written.append(write_volume(volume, stage_dir / sid / f"{label_slug(label, label_set)}.nii", "transported displacement"))
                return written

            config = {"transport": self.config.transport.model_dump(mode="json"), "labels": self.labels}
            self._run_stage(StageType.TRANSPORT, inputs, config, work)
        return PipelineState.COMPUTING_STRAIN

    def _strain_subject(self, subject_id: str, stage_dir: Path) -> tuple:
        cfg = self.config.mechanics
        label_set = self.manifest.label_set
        subject_mask = read_mask(self.context.stage_dir(StageType.HARP) / subject_id / "mask.nii")
        transport_dir = self.context.stage_dir(StageType.TRANSPORT)
        atlas_mask = read_mask(transport_dir / "region.nii")

        rows, written = [], []
        for label in self.labels:
            slug = label_slug(label, label_set)
            spaces = {
                "subject": (self._tracked_motion(subject_id, label).forward, subject_mask),
                "atlas": (read_vector(transport_dir / subject_id / f"{slug}.nii"), atlas_mask),
            }
            for space, (u, region) in spaces.items():
                field, stats = frame_stats(u, region, label, cfg.region_mode)
                rows.append({"subject": subject_id, "space": space, **stats.as_row()})
                if cfg.write_volumes:
                    folder = stage_dir / subject_id / space
                    written.append(write_array(field.components(), u.geometry, folder / f"{slug}_tensor.nii", "strain xx yy zz xy xz yz"))
                    written.append(write_array(field.eigenvalues, u.geometry, folder / f"{slug}_eigenvalues.nii", "E1 E2 E3"))
                    vectors = field.eigenvectors.reshape(u.geometry.shape + (9,))
                    written.append(write_array(vectors, u.geometry, folder / f"{slug}_eigenvectors.nii", "principal directions"))
        return rows, written

    def _handle_strain(self) -> PipelineState:
        if self._selected(StageType.STRAIN):
            inputs = self._upstream(StageType.HARP, StageType.PVIRA, StageType.TRANSPORT)

            def work(stage_dir: Path) -> List[Path]:
                with ThreadPoolExecutor(max_workers=self.max_workers, thread_name_prefix="strain_subject") as executor:
                    futures = [executor.submit(self._strain_subject, sid, stage_dir) for sid in self.subject_ids]
                    results = [future.result() for future in futures]
                rows = [row for subject_rows, _ in results for row in subject_rows]
                written = [path for _, paths in results for path in paths]
                written.append(write_table(rows, STRAIN_ROW_COLUMNS, stage_dir / "subject_strain.csv"))

                consistency = []
                for key in ("E1_mean", "E2_mean", "E3_mean", "MD_mm"):
                    subject_space = [row[key] for row in rows if row["space"] == "subject"]
                    atlas_space = [row[key] for row in rows if row["space"] == "atlas"]
                    consistency.append({"component": key.split("_")[0], "r": strain_consistency(subject_space, atlas_space)})
                written.append(write_table(consistency, ["component", "r"], stage_dir / "consistency.csv"))
                return written

            config = {"mechanics": self.config.mechanics.model_dump(mode="json"), "labels": self.labels}
            self._run_stage(StageType.STRAIN, inputs, config, work)
        return PipelineState.FITTING_MODELS

    def _handle_pca(self) -> PipelineState:
        if self._selected(StageType.PCA):
            inputs = self._upstream(StageType.VALIDATION, StageType.TRANSPORT)
            cfg = self.config.pca
            label_set = self.manifest.label_set
            compare = list(self.manifest.compare_subjects)

            def work(stage_dir: Path) -> List[Path]:
                transport_dir = self.context.stage_dir(StageType.TRANSPORT)
                region = read_mask(transport_dir / "region.nii")
                transported = {
                    sid: TransportedMotion(
                        sid,
                        {label: read_vector(transport_dir / sid / f"{label_slug(label, label_set)}.nii") for label in self.labels},
                        region,
                    )
                    for sid in self.subject_ids
                }
                models, support = fit_cohort(transported, self.labels, compare, cfg.rank_tolerance, self.max_workers)
                geometry = region.geometry
                written = [write_mask(RegionMask.from_bool(geometry, support), stage_dir / "support.nii")]
                for label, model in models.items():
                    folder = stage_dir / label_slug(label, label_set)
                    written.append(write_volume(vector_to_volume(model.mean, support, geometry), folder / "mean.nii", f"mean motion {label_slug(label, label_set)}"))
                    for k in range(min(cfg.report_modes, model.n_modes)):
                        written.append(write_volume(vector_to_volume(model.components[:, k], support, geometry), folder / f"pc{k + 1}.nii", "principal component"))
                    for (mode, sigma), vector in mode_fields(model, cfg.report_modes, cfg.mode_sigmas).items():
                        name = f"pc{mode}_{'plus' if sigma >= 0 else 'minus'}{abs(sigma):g}sd.nii"
                        written.append(write_volume(vector_to_volume(vector, support, geometry), folder / name, "mode field"))

                    spectrum_rows = [
                        {"mode": k + 1, "variance_mm2": float(v), "percent": p}
                        for k, (v, p) in enumerate(zip(model.spectrum, model.variance_percent(len(model.spectrum))))
                    ]
                    written.append(write_table(spectrum_rows, ["mode", "variance_mm2", "percent"], folder / "spectrum.csv"))

                    modes = min(cfg.report_modes, model.n_modes)
                    loading_rows = []
                    for sid in self.subject_ids:
                        centered = transported[sid].frames[label].vectors[support].reshape(-1) - model.mean
                        b = model.components[:, :modes].T @ centered
                        row: Dict[str, object] = {"subject": sid, "role": "compared" if sid in compare else "control"}
                        row.update({f"b{k + 1}": float(b[k]) for k in range(modes)})
                        loading_rows.append(row)
                    columns = ["subject", "role"] + [f"b{k + 1}" for k in range(modes)]
                    written.append(write_table(loading_rows, columns, folder / "subject_loadings.csv"))

                table = loadings_table([models[label] for label in self.labels], cfg.report_modes)
                columns = ["label"] + [f"PC{k + 1}" for k in range(cfg.report_modes)]
                written.append(write_table(table, columns, stage_dir / "loadings.csv"))
                return written

            self._run_stage(StageType.PCA, inputs, {"pca": cfg.model_dump(mode="json"), "labels": self.labels, "compare": compare}, work)
        return PipelineState.REPORTING

    def _handle_report(self) -> PipelineState:
        if self._selected(StageType.REPORT):
            inputs = self._upstream(StageType.VALIDATION, StageType.STRAIN, StageType.PCA)
            config = {"labels": self.labels, "stride": CONFIG["REPORT_QUIVER_STRIDE"]}
            self._run_stage(StageType.REPORT, inputs, config, lambda stage_dir: build_report(self.context.run_dir, stage_dir))
        return PipelineState.COMPLETED


__all__ = ["MotionAtlasPipeline", "STAGE_ORDER", "STRAIN_ROW_COLUMNS"]
