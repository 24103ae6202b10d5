"""
# src/domains/pipeline

Pipeline state machine: states, stage types and the stage-caching executor

流水线状态机: 状态, 阶段类型与带缓存的阶段执行器
"""


from .pipeline_states import PipelineState, StageType
from .pipeline import MotionAtlasPipeline, STAGE_ORDER


__all__ = ["PipelineState", "StageType", "MotionAtlasPipeline", "STAGE_ORDER"]
