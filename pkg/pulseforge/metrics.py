"""
Waveform and fiducial-level reconstruction metrics.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ConstantInput, LengthMismatch, NoMatchedBeats
from .peaks import FIDUCIAL_KINDS, ecg_fiducials
from .traces import write_frame

logger = logging.getLogger(__name__)

PEAK_COLUMNS = {
    "P": "P-Peaks",
    "Q": "Q-Valleys",
    "R": "R-Peaks",
    "S": "S-Valleys",
    "T": "T-Peaks",
}

PathLike = Union[str, Path]


def _paired(
    x: np.ndarray, y: np.ndarray, minimum: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"Lengths differ: {x.size} vs {y.size}", module="metrics")
    if x.size < minimum:
        raise LengthMismatch(
            f"Need at least {minimum} samples, got {x.size}", module="metrics"
        )
    return x, y


def mean_absolute_error(x: np.ndarray, y: np.ndarray) -> float:
    x, y = _paired(x, y)
    return float(np.mean(np.abs(x - y)))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """
    Pearson correlation: centered dot product over the product of centered norms.

    Raises:
        LengthMismatch: If lengths differ or are below 2
        ConstantInput: If either input is constant
    """
    x, y = _paired(x, y, minimum=2)
    xc = x - x.mean()
    yc = y - y.mean()
    denominator = np.sqrt(np.dot(xc, xc)) * np.sqrt(np.dot(yc, yc))
    if denominator == 0.0:
        raise ConstantInput("Pearson correlation is undefined for a constant input")
    return float(np.clip(np.dot(xc, yc) / denominator, -1.0, 1.0))


def dirichlet_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Largest pointwise distance between index-aligned sequences."""
    x, y = _paired(x, y)
    return float(np.max(np.abs(x - y)))


def frechet_distance(x: np.ndarray, y: np.ndarray) -> float:
    """
    Discrete Fréchet distance: the minimum over monotone couplings of the
    largest pointwise distance. Lengths may differ.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise LengthMismatch(
            "Fréchet distance needs non-empty inputs", module="metrics"
        )
    dist = np.abs(x[:, np.newaxis] - y[np.newaxis, :])
    prev = np.maximum.accumulate(dist[0])
    for i in range(1, x.size):
        reach = np.minimum(prev, np.concatenate(([np.inf], prev[:-1])))
        cur = np.empty_like(prev)
        cur[0] = max(dist[i, 0], prev[0])
        for j in range(1, y.size):
            cur[j] = max(dist[i, j], min(reach[j], cur[j - 1]))
        prev = cur
    return float(prev[-1])


def _as_rows(cycles: Union[np.ndarray, Sequence[np.ndarray]]) -> List[np.ndarray]:
    return [np.asarray(c, dtype=np.float64).ravel() for c in cycles]


def _cycle_fiducials(cycle: np.ndarray, rate_hz: float) -> Dict[str, int]:
    return dict(ecg_fiducials(cycle, rate_hz, [int(np.argmax(cycle))]).beats[0])


def peak_error_table(
    ref_cycles: Union[np.ndarray, Sequence[np.ndarray]],
    rec_cycles: Union[np.ndarray, Sequence[np.ndarray]],
    rate_hz: Union[float, Sequence[float]],
    subjects: Optional[Sequence[str]] = None,
) -> Dict[str, Tuple[float, float]]:
    """
    Amplitude error at P/Q/R/S/T between reference and reconstructed cycles.

    Fiducials are located independently on each cycle (R at the cycle maximum,
    the rest via ``ecg_fiducials``); the error of a kind is taken on beats
    where both sides found it.

    Args:
        ref_cycles: Reference ECG cycles
        rec_cycles: Reconstructed ECG cycles, paired with ``ref_cycles``
        rate_hz: Sample rate of the cycles, scalar or one per cycle
        subjects: Subject label per cycle (default: a single subject)

    Returns:
        Mapping kind -> (MMAE, MSAE): means over subjects of the per-subject
        mean and population std of the absolute error

    Raises:
        LengthMismatch: If the inputs are not paired
        NoMatchedBeats: If no fiducial matched on any cycle
    """
    refs = _as_rows(ref_cycles)
    recs = _as_rows(rec_cycles)
    if len(refs) != len(recs):
        raise LengthMismatch(
            f"{len(refs)} reference vs {len(recs)} reconstructed cycles",
            module="metrics",
        )
    rates = np.broadcast_to(np.asarray(rate_hz, dtype=np.float64), (len(refs),))
    subjects = list(subjects) if subjects is not None else [""] * len(refs)
    if len(subjects) != len(refs):
        raise LengthMismatch(
            "One subject label per cycle is required", module="metrics"
        )

    errors: Dict[str, Dict[str, List[float]]] = {kind: {} for kind in FIDUCIAL_KINDS}
    for ref, rec, rate, subject in zip(refs, recs, rates, subjects):
        ref_marks = _cycle_fiducials(ref, float(rate))
        rec_marks = _cycle_fiducials(rec, float(rate))
        for kind in FIDUCIAL_KINDS:
            if kind in ref_marks and kind in rec_marks:
                error = abs(ref[ref_marks[kind]] - rec[rec_marks[kind]])
                errors[kind].setdefault(subject, []).append(float(error))

    table: Dict[str, Tuple[float, float]] = {}
    for kind, per_subject in errors.items():
        if not per_subject:
            continue
        means = [np.mean(values) for values in per_subject.values()]
        stds = [np.std(values) for values in per_subject.values()]
        table[kind] = (float(np.mean(means)), float(np.mean(stds)))
    if not table:
        raise NoMatchedBeats("No fiducial matched between reference and reconstruction")
    return table


@dataclass(frozen=True)
class ReconstructionReport:
    mae: float
    pearson: float
    dirichlet: float
    per_peak: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    frechet: Optional[float] = None
    n_cycles: int = 0


def reconstruction_report(
    ref_cycles: Union[np.ndarray, Sequence[np.ndarray]],
    rec_cycles: Union[np.ndarray, Sequence[np.ndarray]],
    rate_hz: Union[float, Sequence[float]],
    subjects: Optional[Sequence[str]] = None,
    frechet: bool = False,
) -> ReconstructionReport:
    """Per-cycle metrics averaged over all cycles, plus the fiducial table."""
    refs = _as_rows(ref_cycles)
    recs = _as_rows(rec_cycles)
    if len(refs) != len(recs) or not refs:
        raise LengthMismatch(
            "Reference and reconstruction must pair up", module="metrics"
        )
    maes = [mean_absolute_error(a, b) for a, b in zip(refs, recs)]
    dirichlets = [dirichlet_distance(a, b) for a, b in zip(refs, recs)]
    correlations = []
    for a, b in zip(refs, recs):
        try:
            correlations.append(pearson(a, b))
        except ConstantInput:
            logger.debug("Skipping a constant cycle in the Pearson average")
    frechets = [frechet_distance(a, b) for a, b in zip(refs, recs)] if frechet else []
    return ReconstructionReport(
        mae=float(np.mean(maes)),
        pearson=float(np.mean(correlations)) if correlations else float("nan"),
        dirichlet=float(np.mean(dirichlets)),
        per_peak=peak_error_table(refs, recs, rate_hz, subjects),
        frechet=float(np.mean(frechets)) if frechet else None,
        n_cycles=len(refs),
    )


def format_markdown(report: ReconstructionReport, title: str = "Reconstruction") -> str:
    """Render the report with the fiducial errors as MMAE/MSAE rows."""
    kinds = [kind for kind in FIDUCIAL_KINDS if kind in report.per_peak]
    lines = [
        f"## {title} ({report.n_cycles} cycles)",
        "",
        "| metric | value |",
        "|---|---|",
        f"| MAE | {report.mae:.4f} |",
        f"| Pearson | {report.pearson:.4f} |",
        f"| Dirichlet | {report.dirichlet:.4f} |",
    ]
    if report.frechet is not None:
        lines.append(f"| Frechet | {report.frechet:.4f} |")
    lines += [
        "",
        "| | " + " | ".join(PEAK_COLUMNS[k] for k in kinds) + " |",
        "|---" * (len(kinds) + 1) + "|",
        "| MMAE | " + " | ".join(f"{report.per_peak[k][0]:.4f}" for k in kinds) + " |",
        "| MSAE | " + " | ".join(f"{report.per_peak[k][1]:.4f}" for k in kinds) + " |",
    ]
    return "\n".join(lines) + "\n"


def write_report_csv(report: ReconstructionReport, path: PathLike) -> None:
    """One row per fiducial kind plus the waveform metrics as columns."""
    rows = [
        {
            "fiducial": kind,
            "mmae": report.per_peak[kind][0],
            "msae": report.per_peak[kind][1],
        }
        for kind in FIDUCIAL_KINDS
        if kind in report.per_peak
    ]
    frame = pd.DataFrame(rows)
    frame["mae"] = report.mae
    frame["pearson"] = report.pearson
    frame["dirichlet"] = report.dirichlet
    if report.frechet is not None:
        frame["frechet"] = report.frechet
    write_frame(frame, path)
