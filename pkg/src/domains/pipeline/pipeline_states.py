"""
# src/domains/pipeline/pipeline_states.py

Define all states of the motion atlas pipeline and the stage types recorded in its history

定义运动图谱流水线的所有状态, 以及执行记录中使用的阶段类型
"""


from enum import Enum, auto


class PipelineState(Enum):
    """
    Pipeline execution states
    """

    INITIALIZING = auto()  # Validate manifest and config, prepare the run directory.
    BUILDING_ATLAS = auto()  # Groupwise affine + deformable registration of frame-0 cine volumes.
    EXTRACTING_PHASE = auto()  # HARP phase / magnitude of every tagged volume, combined tissue masks.
    TRACKING_MOTION = auto()  # PVIRA motion field of every labelled frame.
    TRANSPORTING = auto()  # Conjugate subject motion into atlas coordinates.
    COMPUTING_STRAIN = auto()  # Lagrangian strain and region statistics, subject and atlas space.
    FITTING_MODELS = auto()  # PCA of transported motion per frame label.
    REPORTING = auto()  # CSV tables and SVG figures.
    COMPLETED = auto()  # Run finished.
    ERROR = auto()  # A stage failed; partial outputs stay on disk.


class StageType(Enum):
    """
    Stage names as used in the run directory and the cache records
    """

    VALIDATION = auto()
    ATLAS = auto()
    HARP = auto()
    PVIRA = auto()
    TRANSPORT = auto()
    STRAIN = auto()
    PCA = auto()
    REPORT = auto()

    @property
    def directory(self) -> str:
        return self.name.lower()


__all__ = ["PipelineState", "StageType"]
