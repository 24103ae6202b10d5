"""
# src/tests/test_cli.py

Command line surface: subcommands, exit codes and stage selection

命令行接口: 子命令, 退出码与阶段选择
"""


import json

import pytest
from typer.testing import CliRunner

from src.app import app
from src.app.app import EXIT_OK, EXIT_STAGE, EXIT_VALIDATION, exit_code
from src.config import CohortSpec, DeformationSpec, EllipsoidSpec, GeometrySpec, PhantomSpec, RunConfig, load_document, write_document
from src.infrastructure.errors import ManifestError, ReportError, StageError


runner = CliRunner()


def small_cohort() -> CohortSpec:
    return CohortSpec(
        phantom=PhantomSpec(
            geometry=GeometrySpec(dims=(16, 16, 16), spacing=(2.0, 2.0, 2.0)),
            tag_period_mm=8.0,
            ellipsoid=EllipsoidSpec(radii=(10.0, 9.0, 8.0)),
            frames=2,
        ),
        subjects=2,
        motion=DeformationSpec(kind="divergence-free-swirl", params={"angle_deg": 6.0, "width_mm": 6.0}),
        frame_labels={"/s/": 1},
    )


@pytest.fixture
def phantom_dir(tmp_path):
    spec = write_document(small_cohort(), tmp_path / "cohort_spec.json")
    result = runner.invoke(app, ["phantom", "gen", "--out", str(tmp_path / "cohort"), "--spec", str(spec), "--workers", "2"])
    assert result.exit_code == EXIT_OK, result.output
    return tmp_path / "cohort"


def test_exit_code_mapping():
    assert exit_code(ManifestError("bad")) == EXIT_VALIDATION
    assert exit_code(FileNotFoundError("gone")) == EXIT_VALIDATION
    assert exit_code(StageError("pvira", None, "diverged")) == EXIT_STAGE
    assert exit_code(ReportError(["report/x.csv"])) == EXIT_STAGE


def test_phantom_gen_writes_a_manifest(phantom_dir):
    manifest = json.loads((phantom_dir / "manifest.json").read_text(encoding="utf-8"))
    assert [s["id"] for s in manifest["subjects"]] == ["sub-01", "sub-02"]
    assert (phantom_dir / "truth.json").is_file()


def test_harp_extract_runs_only_its_stage(phantom_dir, tmp_path):
    run_dir = tmp_path / "run"
    result = runner.invoke(app, ["harp", "extract", "-m", str(phantom_dir / "manifest.json"), "-o", str(run_dir)])
    assert result.exit_code == EXIT_OK, result.output
    assert (run_dir / "harp" / ".stage.json").is_file()
    assert not (run_dir / "atlas").exists()


def test_phantom_gen_seeds_from_the_run_config(tmp_path):
    spec = write_document(small_cohort(), tmp_path / "cohort_spec.json")
    config = write_document(RunConfig(seed=11), tmp_path / "run_config.json")
    result = runner.invoke(
        app, ["phantom", "gen", "--out", str(tmp_path / "cohort"), "--spec", str(spec), "-c", str(config), "--workers", "1"]
    )
    assert result.exit_code == EXIT_OK, result.output
    written = load_document(CohortSpec, tmp_path / "cohort" / "cohort_spec.json")
    assert written.phantom.seed == 11


def test_run_dir_defaults_to_the_manifest_output_dir(phantom_dir):
    manifest = json.loads((phantom_dir / "manifest.json").read_text(encoding="utf-8"))
    manifest["output_dir"] = "runs/default"
    path = phantom_dir / "manifest_with_output.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    result = runner.invoke(app, ["harp", "extract", "-m", str(path)])
    assert result.exit_code == EXIT_OK, result.output
    assert (phantom_dir / "runs" / "default" / "harp" / ".stage.json").is_file()


def test_no_run_dir_anywhere(phantom_dir):
    result = runner.invoke(app, ["harp", "extract", "-m", str(phantom_dir / "manifest.json")])
    assert result.exit_code == EXIT_VALIDATION


def test_invalid_manifest(tmp_path):
    bad = tmp_path / "manifest.json"
    bad.write_text(json.dumps({"version": 1, "subjects": []}), encoding="utf-8")
    result = runner.invoke(app, ["pipeline", "run", "-m", str(bad), "-o", str(tmp_path / "run")])
    assert result.exit_code == EXIT_VALIDATION


def test_missing_manifest(tmp_path):
    result = runner.invoke(app, ["pipeline", "run", "-m", str(tmp_path / "absent.json"), "-o", str(tmp_path / "run")])
    assert result.exit_code == EXIT_VALIDATION


def test_invalid_phantom_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"subjects": 0}), encoding="utf-8")
    result = runner.invoke(app, ["phantom", "gen", "--out", str(tmp_path / "cohort"), "--spec", str(spec)])
    assert result.exit_code == EXIT_VALIDATION


def test_report_on_a_missing_run(tmp_path):
    result = runner.invoke(app, ["report", str(tmp_path / "nowhere")])
    assert result.exit_code == EXIT_STAGE
