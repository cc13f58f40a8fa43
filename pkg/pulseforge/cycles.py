"""
Beat alignment between a PPG and an ECG record, and per-beat cycle pairs.

``align`` finds the global PPG-to-ECG lag by cross-correlating smoothed beat
trains and pairs systolic peaks with R peaks. ``segment_pairs`` then cuts one
PPG cycle (onset to onset) and one ECG cycle (30 % before R, 70 % after) per
pair, resamples both to a fixed length and normalizes their amplitude.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.ndimage import gaussian_filter1d
from scipy.signal import correlate, correlation_lags, find_peaks

from .errors import (
    EmptyPairs,
    MissingColumn,
    NoBeatsDetected,
    NoOverlap,
    NoPeaksFound,
    RateMismatch,
    TooShort,
)
from .peaks import (
    ECG_TERMA,
    PPG_TERMA,
    TermaParams,
    ppg_onsets,
    refine_extremum,
    terma_detect,
)
from .preprocess import detrend_and_denoise, remove_baseline
from .traces import SignalTrace, parse_numeric_column, read_frame, write_frame

logger = logging.getLogger(__name__)

DEFAULT_CYCLE_LEN = 300
PRE_R_FRACTION = 0.3
RR_BOUNDS_S = (0.33, 2.0)
MAX_LAG_S = 2.0
TRAIN_SIGMA_S = 0.05
PAIR_GATE = 0.4
# With alias resolution on, lags scoring within this fraction of the best are
# treated as beat aliases.
ALIAS_TOLERANCE = 0.9

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class CardiacCyclePair:
    """One PPG cycle and the ECG cycle it maps to, both of length L."""

    ppg: np.ndarray
    ecg: np.ndarray
    src_ppg_range: Tuple[int, int] = (0, 0)
    src_ecg_range: Tuple[int, int] = (0, 0)
    rr_interval_s: float = 0.0
    record: str = ""

    @property
    def length(self) -> int:
        return int(self.ppg.size)


@dataclass(frozen=True, eq=False)
class AlignmentReport:
    """Global lag and beat pairing of one PPG/ECG record.

    ``matches`` holds ``(r_peak, sys_peak)`` sample indices in increasing
    order; every R peak is either paired or counted in ``drop_reasons``.
    """

    lag_s: float
    paired: int
    dropped: int
    drop_reasons: Dict[str, int] = field(default_factory=dict)
    r_peaks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    sys_peaks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    onsets: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    matches: Tuple[Tuple[int, int], ...] = ()
    alias_resolved: bool = False

    @property
    def candidates(self) -> int:
        return self.paired + self.dropped


def pick_channel(trace: SignalTrace, preferred: str) -> np.ndarray:
    """Named channel, or the only channel of a single-channel trace."""
    if trace.has_channel(preferred):
        return trace.channel(preferred)
    if trace.n_channels == 1:
        return trace.samples[:, 0]
    raise MissingColumn(f"Channel '{preferred}' not in {trace.channel_labels}")


def _beat_train(
    times_s: np.ndarray, start_s: float, n: int, rate_hz: float
) -> np.ndarray:
    train = np.zeros(n)
    slots = np.rint((times_s - start_s) * rate_hz).astype(np.int64)
    slots = slots[(slots >= 0) & (slots < n)]
    np.add.at(train, slots, 1.0)
    return gaussian_filter1d(train, TRAIN_SIGMA_S * rate_hz)


def lag_search(
    r_times_s: np.ndarray,
    ppg_times_s: np.ndarray,
    rate_hz: float,
    max_lag_s: float = MAX_LAG_S,
    resolve_aliases: bool = False,
) -> Tuple[float, bool]:
    """
    Lag of the PPG beat train behind the ECG beat train, in seconds.

    Both trains are unit impulses smoothed by a 50 ms Gaussian; the lag is the
    argmax of their normalized cross-correlation within ``+-max_lag_s``.

    With ``resolve_aliases`` set, local maxima scoring at least
    ``ALIAS_TOLERANCE`` of the best are treated as one-beat aliases and the
    smallest non-negative one is taken instead.

    Returns:
        ``(lag_s, alias_resolved)``; the flag is set only when alias
        resolution moved the lag away from the argmax
    """
    r_times_s = np.asarray(r_times_s, dtype=np.float64)
    ppg_times_s = np.asarray(ppg_times_s, dtype=np.float64)
    start = min(r_times_s.min(), ppg_times_s.min()) - max_lag_s
    stop = max(r_times_s.max(), ppg_times_s.max()) + max_lag_s
    n = int(np.ceil((stop - start) * rate_hz)) + 1
    ecg_train = _beat_train(r_times_s, start, n, rate_hz)
    ppg_train = _beat_train(ppg_times_s, start, n, rate_hz)

    scale = np.linalg.norm(ecg_train) * np.linalg.norm(ppg_train)
    corr = correlate(ppg_train, ecg_train, mode="full") / scale
    lags = correlation_lags(ppg_train.size, ecg_train.size, mode="full")
    window = np.abs(lags) <= int(round(max_lag_s * rate_hz))
    corr, lags = corr[window], lags[window]

    best = int(np.argmax(corr))
    resolved = False
    if resolve_aliases:
        local, _ = find_peaks(corr, height=ALIAS_TOLERANCE * corr[best])
        candidates = [int(i) for i in local if lags[i] >= 0]
        if candidates:
            alias = min(candidates, key=lambda i: lags[i])
            if alias != best:
                logger.warning(
                    f"Lag {lags[best] / rate_hz:.3f} s resolved to alias "
                    f"{lags[alias] / rate_hz:.3f} s"
                )
                best, resolved = alias, True
    offset = refine_extremum(corr, best) - best
    return float((lags[best] + offset) / rate_hz), resolved


def estimate_lag(
    r_times_s: np.ndarray,
    ppg_times_s: np.ndarray,
    rate_hz: float,
    max_lag_s: float = MAX_LAG_S,
) -> float:
    """Cross-correlation argmax lag of the PPG behind the ECG, in seconds."""
    return lag_search(r_times_s, ppg_times_s, rate_hz, max_lag_s)[0]


def pair_beats(
    r_times_s: np.ndarray, ppg_times_s: np.ndarray, lag_s: float, gate_s: float
) -> List[Tuple[int, int]]:
    """
    Greedy order-preserving nearest pairing after lag removal.

    Returns:
        ``(i, j)`` positions into the R and PPG anchor arrays
    """
    shifted = np.asarray(ppg_times_s, dtype=np.float64) - lag_s
    pairs: List[Tuple[int, int]] = []
    j = 0
    for i, r_time in enumerate(np.asarray(r_times_s, dtype=np.float64)):
        while j < shifted.size and shifted[j] < r_time - gate_s:
            j += 1
        if j >= shifted.size or abs(shifted[j] - r_time) > gate_s:
            continue
        if j + 1 < shifted.size:
            if abs(shifted[j + 1] - r_time) < abs(shifted[j] - r_time):
                j += 1
        pairs.append((i, j))
        j += 1
    return pairs


def _detect(
    signal: np.ndarray, rate_hz: float, params: TermaParams, what: str
) -> np.ndarray:
    try:
        peaks = terma_detect(signal, rate_hz, params)
    except (NoPeaksFound, TooShort) as e:
        raise NoBeatsDetected(f"No {what} beats detected: {e}") from e
    if peaks.size < 2:
        raise NoBeatsDetected(f"Only {peaks.size} {what} beat(s) detected")
    return peaks


def align(
    ppg_trace: SignalTrace,
    ecg_trace: SignalTrace,
    ppg_channel: str = "green",
    ecg_channel: str = "ecg",
    ecg_params: TermaParams = ECG_TERMA,
    ppg_params: TermaParams = PPG_TERMA,
    resolve_aliases: bool = False,
) -> AlignmentReport:
    """
    Align PPG systolic peaks with ECG R peaks.

    Args:
        ppg_trace: Detrended PPG trace
        ecg_trace: Detrended ECG trace at the same sample rate
        resolve_aliases: Prefer the smallest non-negative near-tie lag

    Returns:
        AlignmentReport with the global lag and the beat pairing

    Raises:
        RateMismatch: If the sample rates differ
        NoOverlap: If the two traces do not overlap in time
        NoBeatsDetected: If either side yields fewer than two beats
    """
    rate = ecg_trace.sample_rate_hz
    if abs(ppg_trace.sample_rate_hz - rate) > 1e-9 * rate:
        raise RateMismatch(
            f"PPG at {ppg_trace.sample_rate_hz} Hz vs ECG at {rate} Hz; resample first"
        )
    ppg_end = ppg_trace.t0_s + ppg_trace.duration_s
    ecg_end = ecg_trace.t0_s + ecg_trace.duration_s
    if ppg_trace.t0_s >= ecg_end or ecg_trace.t0_s >= ppg_end:
        raise NoOverlap(
            f"PPG [{ppg_trace.t0_s:.2f}, {ppg_end:.2f}) s and ECG "
            f"[{ecg_trace.t0_s:.2f}, {ecg_end:.2f}) s do not overlap"
        )

    ppg = pick_channel(ppg_trace, ppg_channel)
    ecg = pick_channel(ecg_trace, ecg_channel)
    r_peaks = _detect(ecg, rate, ecg_params, "ECG")
    sys_peaks = _detect(ppg, rate, ppg_params, "PPG")
    onsets = ppg_onsets(ppg, rate, sys_peaks)

    r_times = ecg_trace.t0_s + r_peaks / rate
    sys_times = ppg_trace.t0_s + sys_peaks / rate
    lag, resolved = lag_search(
        r_times, sys_times, rate, resolve_aliases=resolve_aliases
    )
    gate = PAIR_GATE * float(np.median(np.diff(r_times)))
    pairs = pair_beats(r_times, sys_times, lag, gate)

    dropped = r_peaks.size - len(pairs)
    reasons = {"no_ppg_match": dropped} if dropped else {}
    if dropped:
        logger.warning(
            f"{dropped} of {r_peaks.size} R peaks had no PPG beat within the gate"
        )
    logger.info(f"Aligned {len(pairs)} beats, PPG lag {lag * 1000:.1f} ms")
    return AlignmentReport(
        lag_s=lag,
        paired=len(pairs),
        dropped=dropped,
        drop_reasons=reasons,
        r_peaks=r_peaks,
        sys_peaks=sys_peaks,
        onsets=onsets,
        matches=tuple((int(r_peaks[i]), int(sys_peaks[j])) for i, j in pairs),
        alias_resolved=resolved,
    )


def normalize_cycle(cycle: np.ndarray) -> np.ndarray:
    """Zero mean, unit max-abs; a flat cycle becomes all zeros."""
    centered = np.asarray(cycle, dtype=np.float64) - np.mean(cycle)
    peak = np.max(np.abs(centered))
    if peak <= 1e-12:
        return np.zeros_like(centered)
    return centered / peak


def _edge_onset(
    signal: np.ndarray, peak: int, span: int, before: bool
) -> Optional[int]:
    lo, hi = (peak - span, peak) if before else (peak + 1, peak + span + 1)
    if lo < 0 or hi > signal.size or hi <= lo:
        return None
    return lo + int(np.argmin(signal[lo:hi]))


def _cycle_onsets(
    ppg: np.ndarray, sys_peaks: np.ndarray, onsets: np.ndarray, k: int
) -> Tuple[Optional[int], Optional[int]]:
    span = int(np.median(np.diff(sys_peaks))) if sys_peaks.size > 1 else 0
    before: Optional[int]
    if k > 0:
        before = int(onsets[k - 1])
    else:
        before = _edge_onset(ppg, int(sys_peaks[k]), span, True)
    if k < onsets.size:
        after: Optional[int] = int(onsets[k])
    else:
        after = _edge_onset(ppg, int(sys_peaks[k]), span, False)
    return before, after


def _drop(drops: Dict[str, int], reason: str) -> None:
    drops[reason] = drops.get(reason, 0) + 1


def segment_pairs(
    ppg_trace: SignalTrace,
    ecg_trace: SignalTrace,
    report: AlignmentReport,
    L: int = DEFAULT_CYCLE_LEN,
    ppg_channel: str = "green",
    ecg_channel: str = "ecg",
    drops: Optional[Dict[str, int]] = None,
    record: str = "",
) -> List[CardiacCyclePair]:
    """
    Cut, resample and normalize one PPG/ECG cycle pair per aligned beat.

    Anchors (R peak, PPG onsets) are refined to sub-sample precision before
    resampling, so R lands exactly at position ``0.3 * L`` of the ECG cycle.

    Args:
        report: Output of ``align`` on the same traces
        L: Samples per resampled cycle
        drops: Optional counter filled with the reason of every dropped beat

    Returns:
        Pairs in beat order; dropped beats are counted in ``drops``
    """
    if L < 2:
        raise EmptyPairs(f"Cycle length must be >= 2, got {L}")
    drops = drops if drops is not None else {}
    ppg = pick_channel(ppg_trace, ppg_channel)
    ecg = pick_channel(ecg_trace, ecg_channel)
    rate = ecg_trace.sample_rate_hz
    r_peaks = report.r_peaks
    sys_peaks = report.sys_peaks
    r_position = {int(v): i for i, v in enumerate(r_peaks)}
    sys_position = {int(v): i for i, v in enumerate(sys_peaks)}
    ppg_axis = np.arange(ppg.size, dtype=np.float64)
    ecg_axis = np.arange(ecg.size, dtype=np.float64)

    pairs: List[CardiacCyclePair] = []
    for r_index, sys_index in report.matches:
        i = r_position[r_index]
        if r_peaks.size < 2:
            _drop(drops, "rr_out_of_range")
            continue
        nxt = i + 1 if i + 1 < r_peaks.size else i
        rr_samples = int(r_peaks[nxt] - r_peaks[nxt - 1])
        rr_s = rr_samples / rate
        if not RR_BOUNDS_S[0] <= rr_s <= RR_BOUNDS_S[1]:
            _drop(drops, "rr_out_of_range")
            continue

        before, after = _cycle_onsets(
            ppg, sys_peaks, report.onsets, sys_position[sys_index]
        )
        if before is None or after is None or after <= before:
            _drop(drops, "missing_onset")
            continue

        r_exact = refine_extremum(ecg, r_index)
        ecg_lo = r_exact - PRE_R_FRACTION * rr_samples
        ecg_hi = r_exact + (1.0 - PRE_R_FRACTION) * rr_samples
        if ecg_lo < 0 or ecg_hi > ecg.size - 1:
            _drop(drops, "ecg_window_out_of_bounds")
            continue

        ppg_lo = refine_extremum(ppg, before)
        ppg_hi = refine_extremum(ppg, after)
        ppg_cycle = np.interp(
            np.linspace(ppg_lo, ppg_hi, L, endpoint=False), ppg_axis, ppg
        )
        ecg_cycle = np.interp(
            np.linspace(ecg_lo, ecg_hi, L, endpoint=False), ecg_axis, ecg
        )
        pairs.append(
            CardiacCyclePair(
                ppg=normalize_cycle(ppg_cycle),
                ecg=normalize_cycle(ecg_cycle),
                src_ppg_range=(before, after),
                src_ecg_range=(int(np.floor(ecg_lo)), int(np.ceil(ecg_hi))),
                rr_interval_s=rr_s,
                record=record,
            )
        )

    if drops:
        logger.warning(f"Dropped beats while segmenting: {drops}")
    logger.info(f"Segmented {len(pairs)} cycle pairs of length {L}")
    return pairs


def pairs_to_arrays(
    pairs: Sequence[CardiacCyclePair],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack pairs into ``(ppg, ecg, rr_s)`` arrays of shape (N, L), (N, L), (N,)."""
    if not pairs:
        raise EmptyPairs("No cycle pairs")
    return (
        np.vstack([p.ppg for p in pairs]),
        np.vstack([p.ecg for p in pairs]),
        np.array([p.rr_interval_s for p in pairs]),
    )


def write_pairs_csv(pairs: Sequence[CardiacCyclePair], path: PathLike) -> None:
    """Write pairs as ``ppg_0..ppg_{L-1},ecg_0..ecg_{L-1},rr_s`` rows."""
    ppg, ecg, rr = pairs_to_arrays(pairs)
    length = ppg.shape[1]
    frame = pd.DataFrame(
        np.hstack([ppg, ecg, rr[:, np.newaxis]]),
        columns=[f"ppg_{i}" for i in range(length)]
        + [f"ecg_{i}" for i in range(length)]
        + ["rr_s"],
    )
    write_frame(frame, path)


def read_pairs_csv(path: PathLike, record: str = "") -> List[CardiacCyclePair]:
    """Read a cycle-pair CSV written by ``write_pairs_csv``."""
    frame = read_frame(path)
    ppg_cols = [c for c in frame.columns if c.startswith("ppg_")]
    ecg_cols = [c for c in frame.columns if c.startswith("ecg_")]
    if not ppg_cols or len(ppg_cols) != len(ecg_cols) or "rr_s" not in frame.columns:
        raise MissingColumn(f"{path} is not a cycle-pair file")
    ppg = np.column_stack([parse_numeric_column(frame, c) for c in ppg_cols])
    ecg = np.column_stack([parse_numeric_column(frame, c) for c in ecg_cols])
    rr = parse_numeric_column(frame, "rr_s")
    return [
        CardiacCyclePair(
            ppg=ppg[i], ecg=ecg[i], rr_interval_s=float(rr[i]), record=record
        )
        for i in range(rr.size)
    ]


def pairs_from_record(
    ppg_trace: SignalTrace,
    ecg_trace: SignalTrace,
    L: int = DEFAULT_CYCLE_LEN,
    ppg_channel: str = "green",
    ecg_channel: str = "ecg",
    record: str = "",
    resolve_aliases: bool = False,
) -> Tuple[List[CardiacCyclePair], AlignmentReport, Dict[str, int]]:
    """
    Detrend raw PPG/ECG traces, align them and cut their cycle pairs.

    The PPG is detrended and denoised; the ECG only loses its baseline so the
    QRS complex keeps its shape.

    Returns:
        ``(pairs, report, drops)`` where ``drops`` merges alignment and
        segmentation drop reasons
    """
    ppg = detrend_and_denoise(ppg_trace)
    ecg = remove_baseline(ecg_trace)
    report = align(ppg, ecg, ppg_channel, ecg_channel, resolve_aliases=resolve_aliases)
    drops = dict(report.drop_reasons)
    pairs = segment_pairs(ppg, ecg, report, L, ppg_channel, ecg_channel, drops, record)
    return pairs, report, drops
