"""
# src/domains/entities/execution_context.py

Run buffer of the pipeline: current state, resolved inputs and the execution history

流水线运行缓冲区: 当前状态, 解析后的输入与执行记录
"""


from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List
import time

from src.config import CohortManifest, RunConfig
from src.domains.pipeline.pipeline_states import PipelineState, StageType


@dataclass
class PipelineContext:
    """
    Context information shared by the stage handlers
    """

    current_state: PipelineState
    manifest: CohortManifest
    config: RunConfig
    run_dir: Path
    stage_hashes: Dict[str, str] = field(default_factory=dict)
    cache_hits: List[str] = field(default_factory=list)
    executed: List[str] = field(default_factory=list)
    execution_history: List[Dict[str, Any]] = field(default_factory=list)
    error: str = ""

    # Log component function
    def add_execution_record(self, stage: StageType, details: Dict[str, Any]) -> None:
        """
        Record an execution step; kept in memory only so the run directory stays reproducible
        """
        self.execution_history.append(
            {
                "timestamp": time.time(),
                "stage": stage.name,
                "state": self.current_state.name,
                "details": details,
            }
        )

    def stage_dir(self, stage: StageType) -> Path:
        return self.run_dir / stage.directory
