"""
# src/domains/services

Service components of the pipeline stages: phantom, HARP, PVIRA, atlas, transport, mechanics, PCA and report

流水线各阶段的服务组件: 体模, HARP, PVIRA, 图谱, 变换, 力学, PCA 与报告
"""


from .deformations import AnalyticDeformation, ConjugatedDeformation, ScaledDeformation, build_deformation
from .phantom_service import (
    orientation_axis,
    envelope,
    generate_tagged,
    generate_cine,
    ground_truth_displacement,
    subject_anatomies,
    subject_deformations,
    generate_cohort,
)
from .harp_service import wrap, wrapped_gradient, check_nyquist, extract_phase, combine_masks
from .pvira_service import (
    TrackingResult,
    exponentiate,
    velocity_update,
    incompressibility_project,
    interior_divergence,
    track_frame,
    track,
)
from .atlas_service import cc_metric, normalize_intensity, groupwise_affine, groupwise_deformable, build_atlas
from .transport_service import atlas_region, conjugate, conjugate_field, transport_cohort, strain_consistency
from .mechanics_service import (
    symmetric_eigensystem,
    strain,
    rigid_invariance_check,
    mean_deformation,
    mean_log_jacobian,
    region_stats,
    frame_stats,
)
from .statmodel_service import fit, reconstruct, reconstruct_volume, mode_fields, loadings_table, fit_cohort
from .report_service import build_report


__all__ = [
    "AnalyticDeformation",
    "ConjugatedDeformation",
    "ScaledDeformation",
    "build_deformation",
    "orientation_axis",
    "envelope",
    "generate_tagged",
    "generate_cine",
    "ground_truth_displacement",
    "subject_anatomies",
    "subject_deformations",
    "generate_cohort",
    "wrap",
    "wrapped_gradient",
    "check_nyquist",
    "extract_phase",
    "combine_masks",
    "TrackingResult",
    "exponentiate",
    "velocity_update",
    "incompressibility_project",
    "interior_divergence",
    "track_frame",
    "track",
    "cc_metric",
    "normalize_intensity",
    "groupwise_affine",
    "groupwise_deformable",
    "build_atlas",
    "atlas_region",
    "conjugate",
    "conjugate_field",
    "transport_cohort",
    "strain_consistency",
    "symmetric_eigensystem",
    "strain",
    "rigid_invariance_check",
    "mean_deformation",
    "mean_log_jacobian",
    "region_stats",
    "frame_stats",
    "fit",
    "reconstruct",
    "reconstruct_volume",
    "mode_fields",
    "loadings_table",
    "fit_cohort",
    "build_report",
]
