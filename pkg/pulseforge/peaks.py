"""
Beat detection with two event-related moving averages (TERMA).

The detector bandpasses the signal, squares it, and compares a short
moving average (event width) against a long one (beat width) plus a relative
offset. Contiguous regions where the short average wins are blocks of
interest; each surviving block contributes the argmax of the input signal.
The same machinery finds ECG R peaks and PPG systolic peaks with different
operating points.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import butter, sosfiltfilt

from .errors import EmptyPeaks, EmptyRPeaks, InvalidConfig, NoPeaksFound, TooShort

logger = logging.getLogger(__name__)

FIDUCIAL_KINDS = ("P", "Q", "R", "S", "T")


@dataclass(frozen=True)
class TermaParams:
    """
    Operating point of the TERMA detector.

    ``min_block_energy_ratio`` drops blocks whose peak event energy is below
    that fraction of the median block; ``refractory_s`` merges peaks closer
    than that interval, keeping the taller one. Setting both to 0 gives the
    plain two-average detector.
    """

    w_event_s: float
    w_cycle_s: float
    beta: float
    bandpass_lo_hz: float
    bandpass_hi_hz: float
    clip_negative: bool = False
    min_block_energy_ratio: float = 0.2
    refractory_s: float = 0.25
    filter_order: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.w_event_s < self.w_cycle_s:
            raise InvalidConfig(
                "Need 0 < w_event_s < w_cycle_s, "
                f"got {self.w_event_s}, {self.w_cycle_s}",
                module="peaks",
            )
        if self.beta < 0:
            raise InvalidConfig(f"beta must be >= 0, got {self.beta}", module="peaks")
        if not 0 < self.bandpass_lo_hz < self.bandpass_hi_hz:
            raise InvalidConfig(
                f"Invalid bandpass [{self.bandpass_lo_hz}, {self.bandpass_hi_hz}] Hz",
                module="peaks",
            )
        if self.min_block_energy_ratio < 0 or self.refractory_s < 0:
            raise InvalidConfig("Robustness parameters must be >= 0", module="peaks")


ECG_TERMA = TermaParams(0.097, 0.611, 0.08, 8.0, 20.0, refractory_s=0.25)
PPG_TERMA = TermaParams(
    0.111, 0.667, 0.02, 0.5, 8.0, clip_negative=True, refractory_s=0.3
)


@dataclass(frozen=True, eq=False)
class FiducialSet:
    """Detected landmarks of one record, as sample indices.

    ``beats`` holds one ``{kind: index}`` mapping per R peak; a kind is missing
    from a beat when its search window was empty.
    """

    r_peaks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    sys_peaks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    onsets: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    beats: Tuple[Dict[str, int], ...] = ()

    def indices(self, kind: str) -> np.ndarray:
        if kind == "R":
            return self.r_peaks
        if kind == "SYS":
            return self.sys_peaks
        if kind == "ONSET":
            return self.onsets
        return np.array(
            [beat[kind] for beat in self.beats if kind in beat], dtype=np.int64
        )

    @property
    def p_peaks(self) -> np.ndarray:
        return self.indices("P")

    @property
    def q_valleys(self) -> np.ndarray:
        return self.indices("Q")

    @property
    def s_valleys(self) -> np.ndarray:
        return self.indices("S")

    @property
    def t_peaks(self) -> np.ndarray:
        return self.indices("T")

    def rows(self) -> List[Tuple[int, str]]:
        """All landmarks as ``(index, kind)`` sorted by index."""
        rows = [(int(i), "R") for i in self.r_peaks]
        for beat in self.beats:
            rows.extend((int(i), kind) for kind, i in beat.items() if kind != "R")
        rows.extend((int(i), "SYS") for i in self.sys_peaks)
        rows.extend((int(i), "ONSET") for i in self.onsets)
        return sorted(rows)


def bandpass(
    signal: np.ndarray, rate_hz: float, lo_hz: float, hi_hz: float, order: int = 2
) -> np.ndarray:
    """Zero-phase Butterworth bandpass; the upper edge is capped below Nyquist."""
    hi_hz = min(hi_hz, 0.99 * rate_hz / 2.0)
    if lo_hz >= hi_hz:
        raise InvalidConfig(
            f"Bandpass [{lo_hz}, {hi_hz}] Hz is empty at {rate_hz} Hz", module="peaks"
        )
    sos = butter(order, [lo_hz, hi_hz], btype="bandpass", fs=rate_hz, output="sos")
    return sosfiltfilt(sos, signal)


def _blocks(mask: np.ndarray) -> List[Tuple[int, int]]:
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def _apply_refractory(
    peaks: List[int], signal: np.ndarray, min_gap: int
) -> List[int]:
    kept: List[int] = []
    for index in peaks:
        if kept and index - kept[-1] < min_gap:
            if signal[index] > signal[kept[-1]]:
                kept[-1] = index
            continue
        kept.append(index)
    return kept


def terma_detect(
    signal: np.ndarray, rate_hz: float, params: TermaParams = ECG_TERMA
) -> np.ndarray:
    """
    Detect beats with two event-related moving averages.

    Args:
        signal: Detrended 1-D signal
        rate_hz: Sample rate in Hz
        params: Detector operating point (``ECG_TERMA`` or ``PPG_TERMA``)

    Returns:
        Strictly increasing sample indices of the detected peaks

    Raises:
        TooShort: If the signal is shorter than two beat windows
        NoPeaksFound: If no block of interest survives
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    if x.size < 2 * params.w_cycle_s * rate_hz:
        raise TooShort(
            f"Signal of {x.size / rate_hz:.2f} s shorter than "
            f"2 x {params.w_cycle_s} s beat window"
        )
    filtered = bandpass(
        x, rate_hz, params.bandpass_lo_hz, params.bandpass_hi_hz, params.filter_order
    )
    if params.clip_negative:
        filtered = np.clip(filtered, 0.0, None)
    energy = filtered * filtered
    if not np.max(energy) > 0.0:
        raise NoPeaksFound("Signal has no energy in the detection band")

    w_event = max(1, int(round(params.w_event_s * rate_hz)))
    w_cycle = max(w_event + 1, int(round(params.w_cycle_s * rate_hz)))
    ma_event = uniform_filter1d(energy, w_event, mode="nearest")
    ma_cycle = uniform_filter1d(energy, w_cycle, mode="nearest")
    threshold = ma_cycle + params.beta * float(np.mean(energy))

    blocks = [(a, b) for a, b in _blocks(ma_event > threshold) if b - a >= w_event]
    if not blocks:
        raise NoPeaksFound("No block of interest exceeded the beat threshold")

    if params.min_block_energy_ratio > 0 and len(blocks) > 1:
        strength = np.array([ma_event[a:b].max() for a, b in blocks])
        floor = params.min_block_energy_ratio * float(np.median(strength))
        blocks = [block for block, s in zip(blocks, strength) if s >= floor]

    peaks = [a + int(np.argmax(x[a:b])) for a, b in blocks]
    if params.refractory_s > 0:
        peaks = _apply_refractory(peaks, x, int(round(params.refractory_s * rate_hz)))
    logger.debug(f"TERMA kept {len(peaks)} of {len(blocks)} blocks")
    return np.unique(np.asarray(peaks, dtype=np.int64))


def _ms(rate_hz: float, ms: float) -> int:
    return int(round(ms * rate_hz / 1000.0))


def _arg_in(signal: np.ndarray, lo: int, hi: int, largest: bool) -> Optional[int]:
    """Arg-extremum over ``signal[lo:hi]``; None for an empty range."""
    lo = max(lo, 0)
    hi = min(hi, signal.size)
    if hi <= lo:
        return None
    segment = signal[lo:hi]
    return lo + int(np.argmax(segment) if largest else np.argmin(segment))


def ecg_fiducials(
    signal: np.ndarray, rate_hz: float, r_peaks: Sequence[int]
) -> FiducialSet:
    """
    Locate P, Q, S and T around each R peak.

    Search windows relative to R: Q in [-50, 0) ms, S in (0, 50] ms,
    P in [-250, -50) ms and T in (80, 400] ms, each clipped at the
    neighbouring R peaks and the signal bounds. A fiducial whose clipped
    window is empty is omitted.

    Raises:
        EmptyRPeaks: If no R peaks are given
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    r = np.asarray(r_peaks, dtype=np.int64).ravel()
    if r.size == 0:
        raise EmptyRPeaks("ecg_fiducials needs at least one R peak")

    q_w, p_w = _ms(rate_hz, 50), _ms(rate_hz, 250)
    s_w = _ms(rate_hz, 50)
    t_lo, t_hi = _ms(rate_hz, 80), _ms(rate_hz, 400)

    beats = []
    for i, peak in enumerate(r.tolist()):
        prev_r = int(r[i - 1]) if i > 0 else -1
        next_r = int(r[i + 1]) if i + 1 < r.size else x.size
        beat: Dict[str, int] = {"R": peak}
        candidates = {
            "P": _arg_in(x, max(peak - p_w, prev_r + 1), peak - q_w, True),
            "Q": _arg_in(x, max(peak - q_w, prev_r + 1), peak, False),
            "S": _arg_in(x, peak + 1, min(peak + s_w + 1, next_r), False),
            "T": _arg_in(x, peak + t_lo + 1, min(peak + t_hi + 1, next_r), True),
        }
        beat.update({kind: idx for kind, idx in candidates.items() if idx is not None})
        beats.append(beat)
    return FiducialSet(r_peaks=r, beats=tuple(beats))


def ppg_onsets(
    signal: np.ndarray, rate_hz: float, sys_peaks: Sequence[int]
) -> np.ndarray:
    """
    Pulse onsets as the minimum between consecutive systolic peaks.

    Returns one onset per systolic peak that has a predecessor.

    Raises:
        EmptyPeaks: If no systolic peaks are given
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    peaks = np.asarray(sys_peaks, dtype=np.int64).ravel()
    if peaks.size == 0:
        raise EmptyPeaks("ppg_onsets needs at least one systolic peak")
    onsets = [
        int(a) + int(np.argmin(x[a : b + 1])) for a, b in zip(peaks[:-1], peaks[1:])
    ]
    return np.asarray(onsets, dtype=np.int64)


def ppg_fiducials(
    signal: np.ndarray, rate_hz: float, params: TermaParams = PPG_TERMA
) -> FiducialSet:
    """Systolic peaks and onsets of a PPG channel."""
    sys_peaks = terma_detect(signal, rate_hz, params)
    return FiducialSet(
        sys_peaks=sys_peaks, onsets=ppg_onsets(signal, rate_hz, sys_peaks)
    )


def refine_extremum(signal: np.ndarray, index: int) -> float:
    """Sub-sample location of a local extremum from a three-point parabola."""
    if index <= 0 or index >= signal.size - 1:
        return float(index)
    left, center, right = signal[index - 1 : index + 2]
    denominator = left - 2.0 * center + right
    if denominator == 0.0:
        return float(index)
    offset = 0.5 * (left - right) / denominator
    return float(index + np.clip(offset, -0.5, 0.5))
