"""
Core signal types and trace file I/O.

This module holds the uniformly sampled ``SignalTrace``, the 1 Hz
``LabelSeries`` of ground-truth vitals, sliding-window segmentation and the
CSV exchange format shared by every other module.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import (
    DegenerateTrace,
    EmptyFile,
    InvalidTrace,
    IoError,
    LabelsDoNotCover,
    MissingColumn,
    NonNumericCell,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TIME_COLUMN = "t"
LABEL_COLUMNS = ("hr", "spo2", "rr")
CSV_FLOAT_FORMAT = "%.17g"
HR_RANGE_BPM = (30.0, 220.0)
RR_RANGE_RPM = (4.0, 40.0)


@dataclass(frozen=True, eq=False)
class SignalTrace:
    """Uniformly sampled multi-channel time series."""

    samples: np.ndarray
    sample_rate_hz: float
    channel_labels: Tuple[str, ...]
    t0_s: float = 0.0

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, np.newaxis]
        if samples.ndim != 2:
            raise InvalidTrace(f"samples must be 2-D, got shape {samples.shape}")
        if samples.shape[0] < 1:
            raise InvalidTrace("trace must contain at least one sample")
        if samples.shape[1] < 1:
            raise InvalidTrace("trace must contain at least one channel")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise InvalidTrace(f"sample rate must be positive: {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise InvalidTrace("trace contains non-finite values")
        labels = tuple(str(label) for label in self.channel_labels)
        if len(labels) != samples.shape[1]:
            raise InvalidTrace(
                f"{len(labels)} channel labels for {samples.shape[1]} channels"
            )
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_labels", labels)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "t0_s", float(self.t0_s))

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.samples.shape[1])

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(self.n_samples) / self.sample_rate_hz

    def channel(self, label: str) -> np.ndarray:
        """Return one channel as a 1-D array."""
        try:
            index = self.channel_labels.index(label)
        except ValueError as e:
            raise MissingColumn(
                f"Channel '{label}' not in {self.channel_labels}"
            ) from e
        return self.samples[:, index]

    def has_channel(self, label: str) -> bool:
        return label in self.channel_labels

    def with_samples(self, samples: np.ndarray) -> "SignalTrace":
        return replace(self, samples=samples)

    def select(self, labels: Sequence[str]) -> "SignalTrace":
        columns = np.column_stack([self.channel(label) for label in labels])
        return SignalTrace(columns, self.sample_rate_hz, tuple(labels), self.t0_s)

    def slice(self, start: int, stop: int) -> "SignalTrace":
        return SignalTrace(
            self.samples[start:stop],
            self.sample_rate_hz,
            self.channel_labels,
            self.t0_s + start / self.sample_rate_hz,
        )


@dataclass(frozen=True, eq=False)
class LabelSeries:
    """Ground-truth vitals sampled at (typically) 1 Hz.

    Absent vitals are ``None``; a NaN inside a present series marks a single
    missing reading.
    """

    times_s: np.ndarray
    hr_bpm: Optional[np.ndarray] = None
    spo2_pct: Optional[np.ndarray] = None
    rr_rpm: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times_s, dtype=np.float64)
        if times.ndim != 1 or times.size < 1:
            raise InvalidTrace("label times must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(times)):
            raise InvalidTrace("label times must be finite")
        if np.any(np.diff(times) <= 0):
            raise InvalidTrace("label times must be strictly increasing")
        object.__setattr__(self, "times_s", times)
        for name in ("hr_bpm", "spo2_pct", "rr_rpm"):
            values = getattr(self, name)
            if values is None:
                continue
            values = np.asarray(values, dtype=np.float64)
            if values.shape != times.shape:
                raise InvalidTrace(f"{name} length does not match label times")
            if np.any(np.isinf(values)):
                raise InvalidTrace(f"{name} contains infinite values")
            object.__setattr__(self, name, values)
        if self.spo2_pct is not None:
            present = self.spo2_pct[np.isfinite(self.spo2_pct)]
            if np.any((present < 0) | (present > 100)):
                raise InvalidTrace("spo2 labels must lie in [0, 100]")


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window segmentation parameters."""

    length_s: float
    stride_s: float = 1.0
    label_reduction: str = "mean"

    def __post_init__(self) -> None:
        if not (self.length_s > 0 and self.stride_s > 0):
            raise InvalidTrace("window length and stride must be positive")
        if self.label_reduction != "mean":
            raise InvalidTrace(f"Unsupported label reduction: {self.label_reduction}")


@dataclass(frozen=True)
class VitalsEstimate:
    """HR/SpO2/RR for one window; any vital may be absent.

    HR outside [30, 220] bpm and RR outside [4, 40] breaths/min are kept but
    flagged ``hr_out_of_range`` / ``rr_out_of_range``.
    """

    hr_bpm: Optional[float] = None
    spo2_pct: Optional[float] = None
    rr_rpm: Optional[float] = None
    window_start_s: float = 0.0
    window_len_s: float = 1.0
    flags: Tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.window_len_s > 0:
            raise InvalidTrace("window length must be positive")
        if self.spo2_pct is not None and not 0.0 <= self.spo2_pct <= 100.0:
            raise InvalidTrace(f"SpO2 out of range: {self.spo2_pct}")
        flags = [f for f in self.flags if not f.endswith("_out_of_range")]
        for name, value, (low, high) in (
            ("hr", self.hr_bpm, HR_RANGE_BPM),
            ("rr", self.rr_rpm, RR_RANGE_RPM),
        ):
            if value is not None and not low <= value <= high:
                flags.append(f"{name}_out_of_range")
        object.__setattr__(self, "flags", tuple(flags))

    def get(self, vital: str) -> Optional[float]:
        return {"hr": self.hr_bpm, "spo2": self.spo2_pct, "rr": self.rr_rpm}[vital]


def parse_numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    """Column as float64; the first non-finite cell raises NonNumericCell."""
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0])
        raise NonNumericCell(row + 1, column, str(raw.iloc[row]))
    return values


def read_frame(path: PathLike) -> pd.DataFrame:
    """Read a CSV with every cell kept as a string."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Trace file not found: {path}")
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyFile(f"File is empty: {path}") from e
    except OSError as e:
        raise IoError(f"Failed to read {path}") from e
    frame.columns = [str(column).strip() for column in frame.columns]
    if frame.shape[0] == 0:
        raise EmptyFile(f"File has a header but no data rows: {path}")
    return frame


def read_trace_csv(
    path: PathLike,
    sample_rate_hz: Optional[float] = None,
    channel_cols: Optional[Sequence[str]] = None,
) -> SignalTrace:
    """
    Read a trace CSV with header ``t,<ch1>,<ch2>,...``.

    Args:
        path: CSV file path
        sample_rate_hz: Sample rate; inferred from the ``t`` column if omitted
        channel_cols: Columns to load, in order (default: every non-time column)

    Returns:
        SignalTrace with channels in the requested column order

    Raises:
        FileNotFoundError: If the file does not exist
        EmptyFile: If the file has no data rows
        MissingColumn: If a requested column is absent
        NonNumericCell: If any loaded cell is non-numeric, NaN or infinite
    """
    frame = read_frame(path)
    if channel_cols is None:
        channel_cols = [c for c in frame.columns if c != TIME_COLUMN]
    for column in channel_cols:
        if column not in frame.columns:
            raise MissingColumn(f"Column '{column}' not found in {path}")
    if not channel_cols:
        raise MissingColumn(f"No channel columns in {path}")

    columns = [parse_numeric_column(frame, column) for column in channel_cols]
    t0 = 0.0
    times = None
    if TIME_COLUMN in frame.columns:
        times = parse_numeric_column(frame, TIME_COLUMN)
        t0 = float(times[0])
    if sample_rate_hz is None:
        if times is None or times.size < 2:
            raise InvalidTrace(f"Cannot infer sample rate from {path}")
        sample_rate_hz = 1.0 / float(np.median(np.diff(times)))

    trace = SignalTrace(
        np.column_stack(columns), sample_rate_hz, tuple(channel_cols), t0
    )
    logger.debug(
        f"Read {trace.n_samples} samples x {trace.n_channels} channels from {path}"
    )
    return trace


def write_trace_csv(trace: SignalTrace, path: PathLike) -> None:
    """
    Write a trace as CSV with 17-significant-digit values.

    Raises:
        InvalidTrace: If the trace has no channels
        IoError: If the file cannot be written
    """
    if not isinstance(trace, SignalTrace) or trace.n_channels < 1:
        raise InvalidTrace("Cannot write a trace without channels")
    frame = pd.DataFrame(trace.samples, columns=list(trace.channel_labels))
    frame.insert(0, TIME_COLUMN, trace.times())
    write_frame(frame, path)


def write_frame(frame: pd.DataFrame, path: PathLike) -> None:
    """Write a frame as CSV, creating the parent directory."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(
            path,
            index=False,
            float_format=CSV_FLOAT_FORMAT,
            lineterminator="\n",
            encoding="utf-8",
        )
    except PermissionError as e:
        raise IoError(f"Permission denied writing {path}") from e
    except OSError as e:
        raise IoError(f"Failed to write {path}") from e


def read_labels_csv(path: PathLike) -> LabelSeries:
    """Read a label CSV (``t,hr,spo2,rr``); empty cells mark absent readings."""
    frame = read_frame(path)
    if TIME_COLUMN not in frame.columns:
        raise MissingColumn(f"Column '{TIME_COLUMN}' not found in {path}")
    times = parse_numeric_column(frame, TIME_COLUMN)
    vitals = {}
    for column, name in zip(LABEL_COLUMNS, ("hr_bpm", "spo2_pct", "rr_rpm")):
        if column not in frame.columns:
            continue
        cells = frame[column].str.strip()
        if (cells == "").all():
            continue
        values = np.full(len(cells), np.nan)
        present = (cells != "").to_numpy()
        parsed = pd.to_numeric(cells[present], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(parsed))
        if bad.size:
            row = int(np.flatnonzero(present)[bad[0]])
            raise NonNumericCell(row + 1, column, str(cells.iloc[row]))
        values[present] = parsed
        vitals[name] = values
    return LabelSeries(times, **vitals)


def write_labels_csv(labels: LabelSeries, path: PathLike) -> None:
    """Write a label CSV; absent vitals become empty cells."""
    frame = pd.DataFrame({TIME_COLUMN: labels.times_s})
    for column, values in zip(
        LABEL_COLUMNS, (labels.hr_bpm, labels.spo2_pct, labels.rr_rpm)
    ):
        frame[column] = values if values is not None else np.nan
    write_frame(frame, path)


def resample(trace: SignalTrace, target_hz: float) -> SignalTrace:
    """
    Linearly interpolate a trace onto a uniform grid at ``target_hz``.

    The grid starts at the first sample and spans the original duration; the
    last output sample coincides with the last input sample whenever the span
    is a whole number of output periods.

    Raises:
        DegenerateTrace: If the trace has fewer than two samples
    """
    if not target_hz > 0:
        raise InvalidTrace(f"Target rate must be positive: {target_hz}")
    if trace.n_samples < 2:
        raise DegenerateTrace("Cannot resample a trace with fewer than 2 samples")

    source_t = np.arange(trace.n_samples) / trace.sample_rate_hz
    span = source_t[-1]
    n_out = int(math.floor(span * target_hz + 1e-9)) + 1
    target_t = np.arange(n_out) / target_hz
    if abs(target_t[-1] - span) * target_hz < 1e-6:
        target_t[-1] = span
    columns = [
        np.interp(target_t, source_t, trace.samples[:, c])
        for c in range(trace.n_channels)
    ]
    return SignalTrace(
        np.column_stack(columns), target_hz, trace.channel_labels, trace.t0_s
    )


def window_count(n_samples: int, window_len: int, stride: int) -> int:
    if n_samples < window_len:
        return 0
    return (n_samples - window_len) // stride + 1


def _window_geometry(trace: SignalTrace, spec: WindowSpec) -> Tuple[int, int]:
    window_len = int(round(spec.length_s * trace.sample_rate_hz))
    stride = max(1, int(round(spec.stride_s * trace.sample_rate_hz)))
    if window_len < 1:
        raise InvalidTrace("window shorter than one sample")
    return window_len, stride


def segment_windows(trace: SignalTrace, spec: WindowSpec) -> Iterator[SignalTrace]:
    """Yield full-length windows; a partial trailing window is dropped."""
    window_len, stride = _window_geometry(trace, spec)
    for i in range(window_count(trace.n_samples, window_len, stride)):
        start = i * stride
        yield trace.slice(start, start + window_len)


def _window_mean(values: Optional[np.ndarray], mask: np.ndarray) -> Optional[float]:
    if values is None:
        return None
    inside = values[mask]
    inside = inside[np.isfinite(inside)]
    if inside.size == 0:
        return None
    return float(np.mean(inside))


def windows(
    trace: SignalTrace, labels: LabelSeries, spec: WindowSpec
) -> List[Tuple[SignalTrace, VitalsEstimate]]:
    """
    Segment a trace and attach the mean of the labels inside each window.

    A label belongs to a window when ``start <= t < start + length``.

    Raises:
        LabelsDoNotCover: If some window contains no label timestamp
    """
    result: List[Tuple[SignalTrace, VitalsEstimate]] = []
    for segment in segment_windows(trace, spec):
        start = segment.t0_s
        end = start + segment.duration_s
        mask = (labels.times_s >= start - 1e-9) & (labels.times_s < end - 1e-9)
        if not np.any(mask):
            raise LabelsDoNotCover(
                f"No label inside window [{start:.3f}, {end:.3f}) s"
            )
        label = VitalsEstimate(
            hr_bpm=_window_mean(labels.hr_bpm, mask),
            spo2_pct=_window_mean(labels.spo2_pct, mask),
            rr_rpm=_window_mean(labels.rr_rpm, mask),
            window_start_s=start,
            window_len_s=segment.duration_s,
        )
        result.append((segment, label))
    logger.debug(f"Segmented {trace.duration_s:.1f} s into {len(result)} windows")
    return result
