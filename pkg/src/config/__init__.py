"""
# src/config

All public constants, the .env overrides, and the versioned JSON documents of a run

所有对外暴露的公有常量, .env 覆盖项, 以及一次运行所用的带版本 JSON 文档
"""


from .settings import CONFIG
from .schemas import (
    GeometrySpec,
    EllipsoidSpec,
    DeformationSpec,
    PhantomSpec,
    CohortSpec,
    default_frame_map,
    HarpConfig,
    PviraConfig,
    AtlasConfig,
    TransportConfig,
    MechanicsConfig,
    PcaConfig,
    RunConfig,
    SubjectEntry,
    CohortManifest,
    load_document,
    write_document,
)


__all__ = [
    "CONFIG",
    "GeometrySpec",
    "EllipsoidSpec",
    "DeformationSpec",
    "PhantomSpec",
    "CohortSpec",
    "default_frame_map",
    "HarpConfig",
    "PviraConfig",
    "AtlasConfig",
    "TransportConfig",
    "MechanicsConfig",
    "PcaConfig",
    "RunConfig",
    "SubjectEntry",
    "CohortManifest",
    "load_document",
    "write_document",
]
