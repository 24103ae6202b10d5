"""
# src/domains/services/report_service.py

Cohort report of a finished run: strain table, PC loadings, subject-versus-cohort comparison,
bar charts and mid-slice quiver figures

已完成运行的队列报告: 应变表, 主成分载荷, 个体与群体比较, 柱状图与中间切片矢量图
"""


from __future__ import annotations
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple
import logging
import math

import numpy as np

from src.config import CONFIG
from src.infrastructure.errors import ReportError
from src.infrastructure.io import quiver_mid_slice, read_table, strain_bar_chart, write_table
from .artifacts import label_slug, read_json, read_vector


logger = logging.getLogger(__name__)

STRAIN_COLUMNS = ["label", "E1_mean", "E1_sd", "E2_mean", "E2_sd", "E3_mean", "E3_sd", "MD_mm"]
COMPARISON_COLUMNS = ["subject", "label"] + [f"{e}_{s}" for e in ("E1", "E2", "E3") for s in ("value", "diff", "z")]
STRAIN_KEYS = ("E1_mean", "E2_mean", "E3_mean")


def required_artifacts(run_dir: Path, labels: Sequence[str], label_set: Sequence[str]) -> List[Path]:
    run_dir = Path(run_dir)
    paths = [
        run_dir / "validation" / "cohort.json",
        run_dir / "strain" / "subject_strain.csv",
        run_dir / "strain" / "consistency.csv",
        run_dir / "pca" / "loadings.csv",
    ]
    paths += [run_dir / "pca" / label_slug(label, label_set) / "mean.nii" for label in labels]
    return paths


def _check_present(paths: Sequence[Path]) -> None:
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        logger.error(f"Report inputs missing: {missing}")
        raise ReportError(missing)


def _strain_values(rows: Sequence[Dict[str, str]], space: str) -> Dict[str, Dict[str, Tuple[float, ...]]]:
    """
    subject -> label -> (E1, E2, E3, MD) region means of one space
    """
    out: Dict[str, Dict[str, Tuple[float, ...]]] = {}
    for row in rows:
        if row["space"] != space:
            continue
        values = tuple(float(row[key]) for key in STRAIN_KEYS) + (float(row["MD_mm"]),)
        out.setdefault(row["subject"], {})[row["label"]] = values
    return out


def cohort_strain_table(
    values: Mapping[str, Mapping[str, Sequence[float]]],
    labels: Sequence[str],
    controls: Sequence[str],
) -> List[Dict[str, object]]:
    """
    Per label, mean and population SD across the control subjects of their region-mean strains
    """
    rows = []
    for label in labels:
        stack = np.asarray([values[sid][label] for sid in controls], dtype=np.float64)
        mean, sd = stack.mean(axis=0), stack.std(axis=0)
        row: Dict[str, object] = {"label": label}
        for k in range(3):
            row[f"E{k + 1}_mean"] = float(mean[k])
            row[f"E{k + 1}_sd"] = float(sd[k])
        row["MD_mm"] = float(mean[3])
        rows.append(row)
    return rows


def comparison_rows(
    values: Mapping[str, Mapping[str, Sequence[float]]],
    table: Sequence[Mapping[str, object]],
    subjects: Sequence[str],
) -> List[Dict[str, object]]:
    """
    Difference to the cohort mean and z-score for every listed subject and label
    """
    by_label = {row["label"]: row for row in table}
    rows = []
    for sid in subjects:
        for label, cohort in by_label.items():
            row: Dict[str, object] = {"subject": sid, "label": label}
            for k in range(3):
                value = float(values[sid][label][k])
                mean, sd = float(cohort[f"E{k + 1}_mean"]), float(cohort[f"E{k + 1}_sd"])
                row[f"E{k + 1}_value"] = value
                row[f"E{k + 1}_diff"] = value - mean
                row[f"E{k + 1}_z"] = (value - mean) / sd if sd > 0 else math.nan
            rows.append(row)
    return rows


def build_report(run_dir: Path, out_dir: Path = None) -> List[Path]:
    """
    Write the report bundle of a run directory

    params
    ------
    run_dir: Path - run directory holding validation, strain and pca outputs
    out_dir: Path - target, defaults to run_dir / "report"

    return
    ------
    List[Path] - written files in a fixed order
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "report"
    cohort_file = run_dir / "validation" / "cohort.json"
    _check_present([cohort_file])
    cohort = read_json(cohort_file)
    labels, label_set = cohort["labels"], cohort["label_set"]
    subjects, compare = cohort["subjects"], cohort["compare_subjects"]
    controls = [sid for sid in subjects if sid not in compare]
    _check_present(required_artifacts(run_dir, labels, label_set))

    strain_rows = read_table(run_dir / "strain" / "subject_strain.csv")
    values = _strain_values(strain_rows, "atlas")
    absent = [f"{sid} {label}" for sid in subjects for label in labels if label not in values.get(sid, {})]
    if absent:
        logger.error(f"Strain table lacks atlas-space rows for {absent}")
        raise ReportError(absent)

    written: List[Path] = []
    table = cohort_strain_table(values, labels, controls)
    written.append(write_table(table, STRAIN_COLUMNS, out_dir / "strain_table.csv"))

    loadings = read_table(run_dir / "pca" / "loadings.csv")
    fieldnames = list(loadings[0].keys()) if loadings else ["label"]
    written.append(write_table(loadings, fieldnames, out_dir / "loadings.csv"))

    consistency = read_table(run_dir / "strain" / "consistency.csv")
    written.append(write_table(consistency, ["component", "r"], out_dir / "consistency.csv"))

    if compare:
        written.append(write_table(comparison_rows(values, table, compare), COMPARISON_COLUMNS, out_dir / "comparison.csv"))

    cohort_mean = {row["label"]: [row[f"E{k}_mean"] for k in (1, 2, 3)] for row in table}
    cohort_sd = {row["label"]: [row[f"E{k}_sd"] for k in (1, 2, 3)] for row in table}
    for sid in subjects:
        subject_values = {label: values[sid][label][:3] for label in labels}
        role = "compared" if sid in compare else "control"
        written.append(strain_bar_chart(
            labels, subject_values, cohort_mean, cohort_sd,
            f"{sid} ({role}) vs cohort mean", out_dir / "bars" / f"{sid}.svg",
        ))

    for label in labels:
        slug = label_slug(label, label_set)
        mean_field = read_vector(run_dir / "pca" / slug / "mean.nii")
        written.append(quiver_mid_slice(
            mean_field.vectors, mean_field.geometry.spacing, f"mean motion {label}",
            out_dir / "quiver" / f"{slug}.svg", stride=CONFIG["REPORT_QUIVER_STRIDE"],
        ))

    logger.info(f"Report written to {out_dir}: {len(written)} files")
    return written


__all__ = [
    "STRAIN_COLUMNS",
    "COMPARISON_COLUMNS",
    "required_artifacts",
    "cohort_strain_table",
    "comparison_rows",
    "build_report",
]
