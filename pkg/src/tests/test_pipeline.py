"""
# src/tests/test_pipeline.py

Stage-caching state machine over a small phantom cohort

基于小型体模队列的阶段缓存状态机
"""


import json

import pytest

from src.app.services import MAPExecute, load_manifest, main
from src.config import (
    AtlasConfig,
    CohortSpec,
    DeformationSpec,
    EllipsoidSpec,
    GeometrySpec,
    HarpConfig,
    PcaConfig,
    PhantomSpec,
    PviraConfig,
    RunConfig,
)
from src.domains import STAGE_ORDER, MotionAtlasPipeline, PipelineState, StageType
from src.domains.services import generate_cohort
from src.domains.services.artifacts import write_json
from src.infrastructure.errors import ManifestError, StageError
from src.infrastructure.io import read_table
from src.infrastructure.utils import hash_file


@pytest.fixture(scope="module")
def manifest_path(tmp_path_factory):
    cohort = CohortSpec(
        phantom=PhantomSpec(
            geometry=GeometrySpec(dims=(16, 16, 16), spacing=(2.0, 2.0, 2.0)),
            tag_period_mm=8.0,
            ellipsoid=EllipsoidSpec(radii=(10.0, 9.0, 8.0)),
            frames=3,
        ),
        subjects=3,
        motion=DeformationSpec(kind="divergence-free-swirl", params={"angle_deg": 6.0, "width_mm": 6.0}),
        frame_labels={"/s/": 1, "/u/": 2},
        compare_subjects=["sub-03"],
    )
    return generate_cohort(cohort, tmp_path_factory.mktemp("cohort"), max_workers=2)


def quick_config(**overrides) -> RunConfig:
    values = dict(
        max_workers=2,
        harp=HarpConfig(tag_period_mm=8.0),
        pvira=PviraConfig(iterations=5, pyramid_levels=1),
        atlas=AtlasConfig(
            outer_iterations=1, affine_rounds=1, affine_iterations=5,
            deformable_iterations=3, pyramid_levels=1, centering_iterations=1,
        ),
        pca=PcaConfig(report_modes=2),
    )
    values.update(overrides)
    return RunConfig(**values)


def run(manifest_path, run_dir, stages=None, config=None) -> MotionAtlasPipeline:
    pipeline = MotionAtlasPipeline(load_manifest(manifest_path), config or quick_config(), run_dir, stages)
    MAPExecute(pipeline)
    return pipeline


class TestValidation:
    def test_writes_provenance_and_cohort(self, manifest_path, tmp_path):
        pipeline = run(manifest_path, tmp_path / "run", stages=set())
        assert pipeline.context.current_state == PipelineState.COMPLETED
        assert pipeline.context.executed == ["validation"]

        provenance = json.loads((tmp_path / "run" / "provenance.json").read_text(encoding="utf-8"))
        assert provenance["config_hash"] == quick_config().config_hash()
        assert provenance["stages"] == [stage.directory for stage in STAGE_ORDER]
        assert "sub-02/tagged/s/t02" in provenance["inputs"]
        assert "numpy" in provenance["packages"]

        cohort = json.loads((tmp_path / "run" / "validation" / "cohort.json").read_text(encoding="utf-8"))
        assert cohort["labels"] == ["/s/", "/u/"]
        assert cohort["compare_subjects"] == ["sub-03"]
        assert cohort["frames"]["sub-01"] == {"/s/": 1, "/u/": 2}

    def test_second_run_is_a_cache_hit(self, manifest_path, tmp_path):
        run(manifest_path, tmp_path / "run", stages=set())
        again = run(manifest_path, tmp_path / "run", stages=set())
        assert again.context.executed == [] and again.context.cache_hits == ["validation"]

    def test_config_change_reruns(self, manifest_path, tmp_path):
        run(manifest_path, tmp_path / "run", stages=set())
        changed = run(manifest_path, tmp_path / "run", stages=set(), config=quick_config(pca=PcaConfig(report_modes=3)))
        assert changed.context.executed == ["validation"]

    def test_too_few_controls(self, manifest_path, tmp_path):
        manifest = load_manifest(manifest_path).model_copy(update={"compare_subjects": ["sub-02", "sub-03"]})
        pipeline = MotionAtlasPipeline(manifest, quick_config(), tmp_path / "run")
        with pytest.raises(ManifestError):
            MAPExecute(pipeline)
        assert pipeline.context.current_state == PipelineState.ERROR


class TestStageIsolation:
    def test_missing_upstream_stage(self, manifest_path, tmp_path):
        pipeline = MotionAtlasPipeline(load_manifest(manifest_path), quick_config(), tmp_path / "run", {StageType.TRANSPORT})
        with pytest.raises(StageError) as info:
            MAPExecute(pipeline)
        # the atlas record is the first upstream output transport looks for
        assert info.value.stage == "atlas"
        assert pipeline.context.current_state == PipelineState.ERROR

    def test_selected_stage_only(self, manifest_path, tmp_path):
        pipeline = run(manifest_path, tmp_path / "run", stages={StageType.HARP})
        assert pipeline.context.executed == ["validation", "harp"]
        harp_dir = tmp_path / "run" / "harp"
        assert (harp_dir / "sub-01" / "mask.nii").is_file()
        assert (harp_dir / "sub-02" / "c" / "phase_t02.nii").is_file()
        assert not (tmp_path / "run" / "atlas").exists()


@pytest.mark.slow
def test_full_run_then_cache(manifest_path, tmp_path):
    run_dir = tmp_path / "run"
    config_path = write_json(quick_config().model_dump(mode="json"), tmp_path / "run_config.json")

    assert main(manifest_path, config_path, run_dir) == run_dir
    for name in (
        "atlas/template.nii", "atlas/sub-02/inverse.nii", "atlas/affines.json",
        "pvira/sub-01/forward_t01.nii", "transport/region.nii", "transport/sub-03/frame3.nii",
        "strain/subject_strain.csv", "strain/consistency.csv",
        "pca/loadings.csv", "pca/frame2/mean.nii", "pca/frame2/subject_loadings.csv",
        "report/strain_table.csv", "report/comparison.csv", "report/quiver/frame3.svg",
    ):
        assert (run_dir / name).is_file(), name

    strain_rows = read_table(run_dir / "strain" / "subject_strain.csv")
    assert len(strain_rows) == 3 * 2 * 2
    assert {row["space"] for row in strain_rows} == {"subject", "atlas"}
    # PCA uses the two controls only
    roles = {row["subject"]: row["role"] for row in read_table(run_dir / "pca" / "frame2" / "subject_loadings.csv")}
    assert roles == {"sub-01": "control", "sub-02": "control", "sub-03": "compared"}

    again = run(manifest_path, run_dir)
    assert again.context.executed == []
    assert again.context.cache_hits == [stage.directory for stage in STAGE_ORDER]

    (run_dir / "pca" / "loadings.csv").unlink()
    repaired = run(manifest_path, run_dir)
    assert "pca" in repaired.context.executed
    assert repaired.context.cache_hits[:6] == ["validation", "atlas", "harp", "pvira", "transport", "strain"]
    assert (run_dir / "pca" / "loadings.csv").is_file()


def content_hashes(run_dir) -> dict:
    return {p.relative_to(run_dir).as_posix(): hash_file(p) for p in sorted(run_dir.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_fresh_runs_are_bit_identical(manifest_path, tmp_path):
    first = run(manifest_path, tmp_path / "first").context.run_dir
    second = run(manifest_path, tmp_path / "second").context.run_dir

    hashes = content_hashes(first)
    for name in ("provenance.json", "strain/subject_strain.csv", "pca/loadings.csv", "report/strain_table.csv"):
        assert name in hashes, name
    assert any(name.endswith(".svg") for name in hashes)
    assert hashes == content_hashes(second)
