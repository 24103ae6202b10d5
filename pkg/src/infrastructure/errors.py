"""
# src/infrastructure/errors.py

Exception hierarchy shared by every layer

各层共享的异常体系
"""


from typing import Iterable, Optional


class MotionAtlasError(Exception):
    """
    Root of every error raised on purpose by this package
    """


class GeometryError(MotionAtlasError, ValueError):
    """
    Invalid grid geometry or field contents
    """


class ShapeMismatchError(MotionAtlasError, ValueError):
    """
    Inputs that must share a geometry do not
    """


class VolumeFormatError(MotionAtlasError, ValueError):
    """
    Malformed volume file header; ``field`` names the offending header entry
    """

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"[{field}] {message}")
        self.field = field


class VolumeCapacityError(MotionAtlasError, OverflowError):
    """
    Volume dimensions exceed what the file format can store
    """


class PhantomSpecError(MotionAtlasError, ValueError):
    """
    Invalid phantom specification
    """


class HarpParameterError(MotionAtlasError, ValueError):
    """
    HARP filter parameters incompatible with the grid
    """


class RegionError(MotionAtlasError, ValueError):
    """
    Empty or invalid analysis region
    """


class SampleCountError(MotionAtlasError, ValueError):
    """
    Not enough samples for a statistical model
    """


class ManifestError(MotionAtlasError, ValueError):
    """
    Cohort manifest does not validate
    """


class StageError(MotionAtlasError, RuntimeError):
    """
    A pipeline stage failed
    """

    def __init__(self, stage: str, artifact: Optional[str], message: str) -> None:
        super().__init__(f"Stage *{stage}* failed (artifact: {artifact}). Details: {message}")
        self.stage = stage
        self.artifact = artifact


class ReportError(MotionAtlasError, RuntimeError):
    """
    Report inputs are missing
    """

    def __init__(self, missing: Iterable[str]) -> None:
        self.missing = sorted(missing)
        super().__init__("Missing artifacts: " + ", ".join(self.missing))


__all__ = [
    "MotionAtlasError",
    "GeometryError",
    "ShapeMismatchError",
    "VolumeFormatError",
    "VolumeCapacityError",
    "PhantomSpecError",
    "HarpParameterError",
    "RegionError",
    "SampleCountError",
    "ManifestError",
    "StageError",
    "ReportError",
]
