"""
# src/app/services/pipeline_service.py

Manage the lifecycle of the motion atlas pipeline: logging setup, document loading and the state loop

管理运动图谱流水线的生命周期: 日志设置, 文档读取与状态循环
"""


from __future__ import annotations
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional
import logging
import os
import sys

from src.config import CONFIG, CohortManifest, RunConfig, load_document
from src.domains import MotionAtlasPipeline, PipelineState, StageType
from src.infrastructure.errors import ManifestError


logger = logging.getLogger(__name__)


def setup_logging(level: int = logging.INFO) -> None:
    """
    Log settings when the main function starts;
    stdout plus a timestamped file under the user cache, never inside the run directory
    """
    cache_root = Path(os.getenv("XDG_CACHE_HOME", Path.home() / ".cache"))
    log_dir = cache_root / CONFIG["CACHE_DIR_NAME"] / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m%d %H:%M%S",
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(log_dir / f"{datetime.now().strftime('%Y%m%d%H%M%S')}.log", encoding="utf-8"),
        ],
    )


def load_run_config(path: Optional[Path]) -> RunConfig:
    return load_document(RunConfig, path) if path is not None else RunConfig()


def load_manifest(path: Path) -> CohortManifest:
    return load_document(CohortManifest, path)


# MAP -> Motion Atlas Pipeline
def MAPExecute(MAP: MotionAtlasPipeline) -> Path:
    """
    Main execution loop over the state handlers; a failing handler leaves the ERROR state
    and re-raises so the caller can map the exception to an exit code
    """
    try:
        while MAP.context.current_state not in [
            PipelineState.COMPLETED,
            PipelineState.ERROR,
        ]:
            current_state = MAP.context.current_state

            if current_state in MAP.state_handlers:
                next_state = MAP.state_handlers[current_state]()
                MAP._transition_state(next_state)
            else:
                logger.critical(f"Undefined State: {current_state}")
                MAP._transition_state(PipelineState.ERROR)
                break

        if MAP.context.current_state == PipelineState.COMPLETED:
            logger.info(
                f"Pipeline completed in {MAP.context.run_dir}: executed {MAP.context.executed or 'none'}, "
                f"cached {MAP.context.cache_hits or 'none'}"
            )
            return MAP.context.run_dir
        raise RuntimeError(f"Pipeline stopped in state {MAP.context.current_state.name}")

    except KeyboardInterrupt:
        logger.info("Execution was manually terminated")
        sys.exit(1)

    except Exception as exc:
        logger.error(f"Execution exception: {exc}")
        MAP.context.error = str(exc)
        MAP._transition_state(PipelineState.ERROR, {"error": str(exc)})
        raise


def main(
    manifest_path: Path,
    config_path: Optional[Path],
    run_dir: Optional[Path] = None,
    stages: Optional[Iterable[StageType]] = None,
) -> Path:
    """
    Load the documents, build the pipeline and run it

    params
    ------
    manifest_path: Path - cohort manifest JSON
    config_path: Optional[Path] - RunConfig JSON, defaults when absent
    run_dir: Optional[Path] - output directory, the manifest's output_dir when absent
    stages: Optional[Iterable[StageType]] - subset of stages, all when absent

    return
    ------
    Path - the run directory
    """
    manifest = load_manifest(manifest_path)
    config = load_run_config(config_path)
    if run_dir is None:
        if manifest.output_dir is None:
            raise ManifestError(f"No run directory given and {manifest_path} sets no output_dir")
        run_dir = Path(manifest.output_dir)
    pipeline = MotionAtlasPipeline(manifest, config, run_dir, stages)
    return MAPExecute(pipeline)


__all__ = ["setup_logging", "load_run_config", "load_manifest", "MAPExecute", "main"]
