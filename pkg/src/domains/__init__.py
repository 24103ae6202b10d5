"""
# src/domains

Main state machine

主状态机
"""


from .pipeline import MotionAtlasPipeline, PipelineState, StageType, STAGE_ORDER


__all__ = ["MotionAtlasPipeline", "PipelineState", "StageType", "STAGE_ORDER"]
