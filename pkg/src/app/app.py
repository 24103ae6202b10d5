"""
# src/app/app.py

Command line application: phantom generation, the pipeline stages one by one, the full run and the report

命令行程序: 体模生成, 逐个执行的流水线阶段, 完整运行与报告
"""


from pathlib import Path
from typing import Annotated, Callable, Iterable, Optional, Set
import logging

import typer
from pydantic import ValidationError

from src.config import CohortSpec, RunConfig, load_document
from src.domains import StageType
from src.domains.services import build_report, generate_cohort
from src.infrastructure.errors import StageError
from .services import setup_logging, main


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3

# Stage -> stages whose outputs it reads; cached upstream stages cost only a hash check
STAGE_REQUIREMENTS = {
    StageType.ATLAS: set(),
    StageType.HARP: set(),
    StageType.PVIRA: {StageType.HARP},
    StageType.TRANSPORT: {StageType.ATLAS, StageType.HARP, StageType.PVIRA},
    StageType.STRAIN: {StageType.ATLAS, StageType.HARP, StageType.PVIRA, StageType.TRANSPORT},
    StageType.PCA: {StageType.ATLAS, StageType.HARP, StageType.PVIRA, StageType.TRANSPORT},
}


app = typer.Typer(no_args_is_help=True, add_completion=False, help="Statistical Lagrangian motion atlas")
phantom_app = typer.Typer(no_args_is_help=True, help="Synthetic cohorts with analytic ground truth")
harp_app = typer.Typer(no_args_is_help=True, help="Harmonic phase extraction")
pvira_app = typer.Typer(no_args_is_help=True, help="Phase-based incompressible motion tracking")
atlas_app = typer.Typer(no_args_is_help=True, help="Groupwise anatomical atlas")
transport_app = typer.Typer(no_args_is_help=True, help="Motion transport into atlas coordinates")
strain_app = typer.Typer(no_args_is_help=True, help="Lagrangian strain analysis")
pca_app = typer.Typer(no_args_is_help=True, help="Principal component motion models")
pipeline_app = typer.Typer(no_args_is_help=True, help="End-to-end runs")

app.add_typer(phantom_app, name="phantom")
app.add_typer(harp_app, name="harp")
app.add_typer(pvira_app, name="pvira")
app.add_typer(atlas_app, name="atlas")
app.add_typer(transport_app, name="transport")
app.add_typer(strain_app, name="strain")
app.add_typer(pca_app, name="pca")
app.add_typer(pipeline_app, name="pipeline")


ManifestOption = Annotated[Path, typer.Option("--manifest", "-m", help="Cohort manifest JSON")]
ConfigOption = Annotated[Optional[Path], typer.Option("--config", "-c", help="Run config JSON, defaults when absent")]
RunDirOption = Annotated[Optional[Path], typer.Option("--run-dir", "-o", help="Run directory, the manifest's output_dir when absent")]


def exit_code(exc: BaseException) -> int:
    """
    Validation-class failures map to 2, stage failures and everything else to 3
    """
    if isinstance(exc, StageError):
        return EXIT_STAGE
    if isinstance(exc, (ValidationError, ValueError, FileNotFoundError)):
        return EXIT_VALIDATION
    return EXIT_STAGE


def _guarded(action: Callable[[], object]) -> object:
    try:
        return action()
    except Exception as exc:
        code = exit_code(exc)
        logger.error(f"{type(exc).__name__}: {exc}")
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=code)


def _with_requirements(stages: Iterable[StageType]) -> Set[StageType]:
    selected: Set[StageType] = set()
    for stage in stages:
        selected.add(stage)
        selected |= STAGE_REQUIREMENTS.get(stage, set())
    return selected


def _run_stages(manifest: Path, config: Optional[Path], run_dir: Optional[Path], stages: Optional[Iterable[StageType]]) -> None:
    selected = _with_requirements(stages) if stages is not None else None
    result = _guarded(lambda: main(manifest, config, run_dir, selected))
    typer.echo(str(result))


@app.callback()
def _startup(verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False) -> None:
    setup_logging(logging.DEBUG if verbose else logging.INFO)


@phantom_app.command("gen")
def phantom_gen(
    out: Annotated[Path, typer.Option("--out", "-o", help="Target directory")],
    spec: Annotated[Optional[Path], typer.Option("--spec", "-s", help="CohortSpec JSON, defaults when absent")] = None,
    workers: Annotated[Optional[int], typer.Option("--workers", min=1)] = None,
    config: ConfigOption = None,
) -> None:
    """Generate a phantom cohort and its manifest; noise and anatomy draw from the run config seed."""
    cohort = _guarded(lambda: load_document(CohortSpec, spec) if spec is not None else CohortSpec())
    run_config = _guarded(lambda: load_document(RunConfig, config) if config is not None else RunConfig())
    manifest = _guarded(
        lambda: generate_cohort(cohort, out, max_workers=workers or run_config.max_workers, seed=run_config.seed)
    )
    typer.echo(str(manifest))


@harp_app.command("extract")
def harp_extract(manifest: ManifestOption, run_dir: RunDirOption = None, config: ConfigOption = None) -> None:
    """Phase and magnitude volumes plus tissue masks of every subject."""
    _run_stages(manifest, config, run_dir, [StageType.HARP])


@pvira_app.command("track")
def pvira_track(manifest: ManifestOption, run_dir: RunDirOption = None, config: ConfigOption = None) -> None:
    """Motion fields of every labelled frame."""
    _run_stages(manifest, config, run_dir, [StageType.PVIRA])


@atlas_app.command("build")
def atlas_build(manifest: ManifestOption, run_dir: RunDirOption = None, config: ConfigOption = None) -> None:
    """Template and per-subject mappings from the frame-0 cine volumes."""
    _run_stages(manifest, config, run_dir, [StageType.ATLAS])


@transport_app.command("apply")
def transport_apply(manifest: ManifestOption, run_dir: RunDirOption = None, config: ConfigOption = None) -> None:
    """Tracked motion conjugated into atlas coordinates."""
    _run_stages(manifest, config, run_dir, [StageType.TRANSPORT])


@strain_app.command("compute")
def strain_compute(manifest: ManifestOption, run_dir: RunDirOption = None, config: ConfigOption = None) -> None:
    """Region strain statistics in subject and atlas space."""
    _run_stages(manifest, config, run_dir, [StageType.STRAIN])


@pca_app.command("fit")
def pca_fit(manifest: ManifestOption, run_dir: RunDirOption = None, config: ConfigOption = None) -> None:
    """Per-label PCA models of the transported motion."""
    _run_stages(manifest, config, run_dir, [StageType.PCA])


@pipeline_app.command("run")
def pipeline_run(manifest: ManifestOption, run_dir: RunDirOption = None, config: ConfigOption = None) -> None:
    """Every stage, cached where inputs are unchanged."""
    _run_stages(manifest, config, run_dir, None)


@app.command("report")
def report(
    run_dir: Annotated[Path, typer.Argument(help="Finished run directory")],
    out: Annotated[Optional[Path], typer.Option("--out", "-o", help="Target, defaults to <run-dir>/report")] = None,
) -> None:
    """CSV tables and SVG figures of a finished run."""
    written = _guarded(lambda: build_report(run_dir, out))
    typer.echo(f"{len(written)} files written")


if __name__ == "__main__":
    app()
