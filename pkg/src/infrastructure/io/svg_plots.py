"""
# src/infrastructure/io/svg_plots.py

Static SVG figures: subject-versus-cohort strain bars, mid-slice quiver plots, convergence curves

静态 SVG 图: 个体与群体均值应变柱状图, 中间切片矢量图, 收敛曲线
"""


from __future__ import annotations
from pathlib import Path
from typing import Dict, Sequence, Union
import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from src.config import CONFIG


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

plt.rcParams["svg.hashsalt"] = CONFIG["SVG_HASH_SALT"]
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote figure {path}")
    return path


def strain_bar_chart(
    labels: Sequence[str],
    subject: Dict[str, Sequence[float]],
    cohort_mean: Dict[str, Sequence[float]],
    cohort_sd: Dict[str, Sequence[float]],
    title: str,
    path: PathLike,
) -> Path:
    """
    Grouped bars of E1/E2/E3 per frame label, subject beside the cohort mean with SD whiskers

    params
    ------
    labels: Sequence[str] - frame labels in report order
    subject: Dict[str, Sequence[float]] - label -> (E1, E2, E3) of the subject
    cohort_mean: Dict[str, Sequence[float]] - label -> cohort mean (E1, E2, E3)
    cohort_sd: Dict[str, Sequence[float]] - label -> cohort SD (E1, E2, E3)
    title: str - figure title
    path: PathLike - target .svg

    return
    ------
    Path - the written path
    """
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2), sharey=False)
    positions = np.arange(len(labels))
    width = 0.38
    for k, ax in enumerate(axes):
        sub = [subject[label][k] for label in labels]
        mean = [cohort_mean[label][k] for label in labels]
        sd = [cohort_sd[label][k] for label in labels]
        ax.bar(positions - width / 2, sub, width, label="subject", color="#c0504d")
        ax.bar(positions + width / 2, mean, width, yerr=sd, label="cohort mean", color="#4f81bd", capsize=3)
        ax.axhline(0.0, color="black", linewidth=0.6)
        ax.set_xticks(positions)
        ax.set_xticklabels(labels)
        ax.set_title(f"E{k + 1}")
    axes[0].legend(fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def quiver_mid_slice(vectors: np.ndarray, spacing: Sequence[float], title: str, path: PathLike, stride: int = 3) -> Path:
    """
    In-plane arrows of the mid axial slice, background is the out-of-plane component
    """
    k = vectors.shape[2] // 2
    plane = vectors[:, :, k, :]
    xs = np.arange(plane.shape[0]) * spacing[0]
    ys = np.arange(plane.shape[1]) * spacing[1]
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    image = ax.imshow(plane[..., 2].T, origin="lower", cmap="coolwarm",
                      extent=(xs[0], xs[-1], ys[0], ys[-1]))
    fig.colorbar(image, ax=ax, shrink=0.8, label="u_z (mm)")
    gx, gy = np.meshgrid(xs[::stride], ys[::stride], indexing="ij")
    ax.quiver(gx, gy, plane[::stride, ::stride, 0], plane[::stride, ::stride, 1],
              angles="xy", scale_units="xy", scale=0.25, width=0.004)
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


__all__ = ["strain_bar_chart", "quiver_mid_slice"]
