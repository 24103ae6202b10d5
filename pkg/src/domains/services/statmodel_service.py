"""
# src/domains/services/statmodel_service.py

PCA of atlas-space Lagrangian motion per frame label, through the n x n Gram matrix

按帧标签对图谱空间拉格朗日运动做 PCA, 经由 n x n Gram 矩阵求解
"""


from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import logging

import numpy as np

from src.config import CONFIG
from src.domains.entities import MotionModel, MotionSample, TransportedMotion, vector_to_volume
from src.infrastructure.errors import SampleCountError, ShapeMismatchError
from src.infrastructure.fieldcore import GridGeometry, VectorVolume


logger = logging.getLogger(__name__)


def _first_nonzero_positive(columns: np.ndarray) -> np.ndarray:
    out = columns.copy()
    for k in range(out.shape[1]):
        column = out[:, k]
        threshold = 1e-12 * float(np.max(np.abs(column)))
        nonzero = np.flatnonzero(np.abs(column) > threshold)
        if nonzero.size and column[nonzero[0]] < 0:
            out[:, k] = -column
    return out


def fit(
    samples: Sequence[MotionSample],
    label: Optional[str] = None,
    rank_tolerance: float = CONFIG["PCA_RANK_TOLERANCE"],
) -> MotionModel:
    """
    Mean, principal components, variances and per-subject loadings of one frame

    The covariance (1/(n-1)) Y^T Y shares its nonzero spectrum with the Gram matrix
    (1/(n-1)) Y Y^T; components are Y^T w_k / sqrt((n-1) lambda_k).

    params
    ------
    samples: Sequence[MotionSample] - n >= 2 vectors over the same support
    label: Optional[str] - frame label, defaults to the samples' label
    rank_tolerance: float - eigenvalues below this fraction of the largest are dropped

    return
    ------
    MotionModel - components with first nonzero entry positive
    """
    n = len(samples)
    if n < 2:
        logger.error(f"PCA needs at least 2 samples, got {n}")
        raise SampleCountError(f"PCA needs at least 2 samples, got {n}")
    lengths = {s.vector.size for s in samples}
    if len(lengths) != 1:
        logger.error(f"PCA samples have different support sizes: {sorted(lengths)}")
        raise ShapeMismatchError(f"PCA samples have different support sizes: {sorted(lengths)}")
    ids = [s.subject_id for s in samples]
    if len(set(ids)) != n:
        raise ValueError(f"Duplicate subject ids among PCA samples: {ids}")

    data = np.stack([np.asarray(s.vector, dtype=np.float64) for s in samples])
    mean = data.mean(axis=0)
    centered = data - mean
    gram = centered @ centered.T / (n - 1)
    gram = 0.5 * (gram + gram.T)

    eigenvalues, eigenvectors = np.linalg.eigh(gram)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    spectrum = eigenvalues[: n - 1]
    peak = float(spectrum[0]) if spectrum.size else 0.0
    rank = int(np.sum(spectrum > rank_tolerance * peak)) if peak > 0 else 0

    variances = spectrum[:rank].copy()
    components = centered.T @ eigenvectors[:, :rank] / np.sqrt((n - 1) * variances)
    components = _first_nonzero_positive(components)
    loadings = {sid: components.T @ row for sid, row in zip(ids, centered)}

    label = label if label is not None else samples[0].label
    logger.info(f"PCA of frame {label}: {n} samples, {rank} modes, total variance {float(spectrum.sum()):.4g} mm^2")
    return MotionModel(label, mean, components, variances, loadings, spectrum)


def reconstruct(model: MotionModel, b: Sequence[float]) -> np.ndarray:
    """
    mean + sum_k b_k component_k, b shorter than the mode count pads with zeros
    """
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size > model.n_modes:
        raise ValueError(f"{b.size} coefficients for a model with {model.n_modes} modes")
    return model.mean + model.components[:, : b.size] @ b


def reconstruct_volume(model: MotionModel, b: Sequence[float], support: np.ndarray, geometry: GridGeometry) -> VectorVolume:
    return vector_to_volume(reconstruct(model, b), support, geometry)


def mode_fields(
    model: MotionModel,
    modes: int = CONFIG["PCA_REPORT_MODES"],
    sigmas: Sequence[float] = tuple(CONFIG["PCA_MODE_SIGMAS"]),
) -> Dict[Tuple[int, float], np.ndarray]:
    """
    mean + k sqrt(variance_m) component_m for every reported mode m (1-based) and every k
    """
    out: Dict[Tuple[int, float], np.ndarray] = {}
    for m in range(min(modes, model.n_modes)):
        b = np.zeros(m + 1)
        for k in sigmas:
            b[m] = float(k) * float(np.sqrt(model.variances[m]))
            out[(m + 1, float(k))] = reconstruct(model, b)
    return out


def loadings_table(models: Sequence[MotionModel], modes: int = CONFIG["PCA_REPORT_MODES"]) -> List[Dict[str, object]]:
    """
    One row per frame label: percentage of total variance of PC1..PCm
    """
    rows = []
    for model in models:
        row: Dict[str, object] = {"label": model.label}
        for k, percent in enumerate(model.variance_percent(modes), start=1):
            row[f"PC{k}"] = percent
        rows.append(row)
    return rows


def samples_for_label(transported: Mapping[str, TransportedMotion], label: str, support: np.ndarray) -> List[MotionSample]:
    return [MotionSample.from_volume(sid, label, motion.frames[label], support) for sid, motion in transported.items()]


def fit_cohort(
    transported: Mapping[str, TransportedMotion],
    labels: Optional[Sequence[str]] = None,
    exclude: Sequence[str] = (),
    rank_tolerance: float = CONFIG["PCA_RANK_TOLERANCE"],
    max_workers: Optional[int] = None,
) -> Tuple[Dict[str, MotionModel], np.ndarray]:
    """
    One model per frame label over the shared support D, excluded subjects left out

    return
    ------
    Tuple[Dict[str, MotionModel], np.ndarray] - models in label order and the boolean support
    """
    labels = list(labels or CONFIG["FRAME_LABELS"])
    cohort = {sid: motion for sid, motion in transported.items() if sid not in set(exclude)}
    if len(cohort) < 2:
        logger.error(f"PCA cohort has {len(cohort)} subjects after excluding {list(exclude)}")
        raise SampleCountError(f"PCA cohort has {len(cohort)} subjects after excluding {list(exclude)}")

    regions = [motion.region.as_bool() for motion in cohort.values()]
    support = regions[0]
    for other in regions[1:]:
        if not np.array_equal(other, support):
            raise ShapeMismatchError("Transported motions do not share one region D")

    with ThreadPoolExecutor(max_workers=max_workers or CONFIG["MAX_WORKERS"], thread_name_prefix="pca_fit") as executor:
        futures = {
            label: executor.submit(fit, samples_for_label(cohort, label, support), label, rank_tolerance)
            for label in labels
        }
        models = {label: future.result() for label, future in futures.items()}
    return models, support


__all__ = [
    "fit",
    "reconstruct",
    "reconstruct_volume",
    "mode_fields",
    "loadings_table",
    "samples_for_label",
    "fit_cohort",
]
