"""
# src/config/constants.py

All customizable public constants

所有可自定义公有常量定义处
"""


from typing import Dict, Any


CONSTANT_CONFIG: Dict[str, Any] = {
    # Main: Full process
    "MAX_WORKERS": 8,
    "CACHE_DIR_NAME": "motion-atlas",
    "FRAME_LABELS": ["/ə/", "/s/", "/u/", "/k/"],
    "ORIENTATIONS": ["a", "s", "c"],
    "ORIENTATION_AXES": {"s": 0, "c": 1, "a": 2}, # Tag-normal axis: sagittal x, coronal y, axial z
    "SCHEMA_VERSION": 1,
    "SEED": 0,

    # Volume files
    "NIFTI_MAX_DIM": 32767, # dim[] entries are int16
    "WORLD_CONVENTION": "axis-aligned right-handed world mm",

    # Phantom
    "PHANTOM_DIM": 64,
    "PHANTOM_SPACING_MM": 1.875,
    "PHANTOM_FRAMES": 8,
    "PHANTOM_TAG_PERIOD_MM": 12.0,
    "PHANTOM_SHELL_WIDTH": 0.15, # Half-width of the envelope transition, fraction of the radius
    "PHANTOM_NOISE_SIGMA": 0.0,
    "PHANTOM_FADE": 1.0, # Multiplier per frame, 1.0 means no fade

    # HARP
    "HARP_THRESHOLD_FRACTION": 0.25,
    "HARP_BANDWIDTH_RATIO": 0.5, # sigma_f / center frequency

    # PVIRA
    "PVIRA_PYRAMID_LEVELS": 3,
    "PVIRA_ITERATIONS": 50,
    "PVIRA_FLUID_SIGMA_VOXELS": 1.0,
    "PVIRA_DIFFUSION_SIGMA_VOXELS": 1.0,
    "PVIRA_DIV_TOLERANCE": 1e-6,
    "PVIRA_EPSILON_RATIO": 1e-12, # epsilon = ratio * K
    "PVIRA_SUPPORT_DILATION": 3, # Unit: voxel
    "PVIRA_MIN_VOXELS_PER_PERIOD": 3.0,
    "PVIRA_CONVERGENCE_TOL": 1e-4, # Update RMS, unit: voxel

    # Atlas
    "ATLAS_OUTER_ITERATIONS": 4,
    "ATLAS_CC_RADIUS": 2,
    "ATLAS_AFFINE_CC_RADIUS": 4,
    "ATLAS_PYRAMID_LEVELS": 3,
    "ATLAS_AFFINE_ROUNDS": 3,
    "ATLAS_AFFINE_ITERATIONS": 40,
    "ATLAS_DEFORMABLE_ITERATIONS": 30,
    "ATLAS_STEP_VOXELS": 0.25,
    "ATLAS_FLUID_SIGMA_VOXELS": 1.5,
    "ATLAS_DIFFUSION_SIGMA_VOXELS": 1.0,
    "ATLAS_FOREGROUND_FRACTION": 0.1,
    "ATLAS_CENTERING_ITERATIONS": 5,

    # Transport
    "TRANSPORT_REGION_DILATION": 2, # Unit: voxel
    "TRANSPORT_REGION_THRESHOLD": 0.25, # Fraction of the template intensity range

    # Mechanics
    "MECHANICS_REGION_MODE": "mask", # "mask" or "bbox"
    "MECHANICS_WRITE_VOLUMES": False,

    # PCA
    "PCA_REPORT_MODES": 3,
    "PCA_MODE_SIGMAS": [-1.0, 1.0],
    "PCA_RANK_TOLERANCE": 1e-10, # Relative to the largest eigenvalue

    # Report
    "REPORT_QUIVER_STRIDE": 3,
    "SVG_HASH_SALT": "motion-atlas",
}
