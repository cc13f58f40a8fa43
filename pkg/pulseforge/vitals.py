"""
Heart rate, SpO2 and respiratory rate from multi-channel PPG windows.

Classical estimators work on one window at a time: HR from the dominant
cardiac-band frequency, SpO2 from the red/green ratio of ratios, RR from the
stronger of two respiratory surrogates (baseline wander and pulse amplitude
modulation). A small STFT-feature network can be trained as an alternative
estimator.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import (
    EmptyBand,
    LengthMismatch,
    MissingChannel,
    ModelFormatError,
    NoBeats,
    NoDominantPeak,
    NonPositiveDC,
    NoPeaksFound,
    PulseForgeError,
    ShapeMismatch,
    TooFewWindows,
    TooShort,
    WindowTooShort,
)
from .nnkit import (
    Batch,
    LayerSpec,
    Network,
    TrainConfig,
    fit,
    init_network,
    network_from_header,
    network_header,
    read_container,
    write_container,
)
from .p2e import Standardizer
from .peaks import PPG_TERMA, ppg_onsets, terma_detect
from .preprocess import approx_baseline, denoise_keep_baseline, detrend_and_denoise
from .spectral import SpectralPeak, spectral_peak, stft
from .traces import (
    LabelSeries,
    SignalTrace,
    VitalsEstimate,
    WindowSpec,
    segment_windows,
    window_count,
    windows,
    write_frame,
)
from .utils import worker_count

logger = logging.getLogger(__name__)

VITALS = ("hr", "spo2", "rr")
HR_BAND_HZ = (0.7, 3.5)
RR_BAND_HZ = (0.1, 0.67)
HR_WINDOW_S = 4.0
RR_WINDOW_S = 32.0
HR_MISMATCH_BPM = 10.0
AM_RATE_HZ = 4.0
MIN_AM_BEATS = 4
RR_MIN_STRENGTH = 0.02
RR_MIN_PROMINENCE = 3.0
MIN_HEAD_WINDOWS = 50
HEAD_TRAIN_CONFIG = TrainConfig(batch_size=128, lr0=1e-3, max_epochs=300)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class SpO2Calibration:
    """Linear ratio-of-ratios calibration: ``SpO2 = a - b * R``."""

    a: float = 110.0
    b: float = 25.0

    def __post_init__(self) -> None:
        if not self.b > 0:
            raise NonPositiveDC(f"Calibration slope b must be positive: {self.b}")

    def spo2(self, ratio: float) -> float:
        return float(np.clip(self.a - self.b * ratio, 0.0, 100.0))

    def ratio(self, spo2_pct: float) -> float:
        return (self.a - spo2_pct) / self.b


def _require_length(window: SignalTrace, min_window_s: float) -> None:
    if window.duration_s + 1e-9 < min_window_s:
        raise WindowTooShort(
            f"Window of {window.duration_s:.2f} s shorter than {min_window_s:.2f} s"
        )


def _channel(window: SignalTrace, name: str) -> np.ndarray:
    if not window.has_channel(name):
        raise MissingChannel(f"Channel '{name}' not in {window.channel_labels}")
    return window.channel(name)


def _is_flat(signal: np.ndarray) -> bool:
    centered = signal - signal.mean()
    scale = max(1.0, abs(float(signal.mean())))
    return float(np.max(np.abs(centered))) <= 1e-12 * scale


def beat_rate_bpm(signal: np.ndarray, rate_hz: float) -> Optional[float]:
    """Mean beat rate from TERMA systolic peaks; None with fewer than two beats."""
    try:
        peaks = terma_detect(signal, rate_hz, PPG_TERMA)
    except (TooShort, NoPeaksFound):
        return None
    if peaks.size < 2:
        return None
    return 60.0 * (peaks.size - 1) * rate_hz / float(peaks[-1] - peaks[0])


def estimate_hr(
    window: SignalTrace,
    channel: str = "green",
    min_window_s: float = HR_WINDOW_S,
    flags: Optional[List[str]] = None,
) -> float:
    """
    Heart rate in bpm from the dominant frequency in 0.7-3.5 Hz.

    The spectral value is cross-checked against the TERMA beat count; a
    disagreement above 10 bpm appends ``hr_beat_mismatch`` to ``flags``.

    Raises:
        WindowTooShort: If the window is shorter than ``min_window_s``
        MissingChannel: If ``channel`` is absent
        NoDominantPeak: If the window has no pulsatile component
    """
    _require_length(window, min_window_s)
    signal = _channel(window, channel)
    rate = window.sample_rate_hz
    if _is_flat(signal):
        raise NoDominantPeak("Window is constant; no cardiac frequency")
    try:
        peak = spectral_peak(signal, rate, *HR_BAND_HZ)
    except EmptyBand as e:
        raise NoDominantPeak(f"Cardiac band unavailable: {e}") from e
    if peak.amplitude <= 0.0:
        raise NoDominantPeak("No energy in the cardiac band")
    hr = 60.0 * peak.freq_hz

    beats = beat_rate_bpm(signal, rate)
    if beats is not None and abs(beats - hr) > HR_MISMATCH_BPM:
        logger.warning(
            f"Spectral HR {hr:.1f} bpm disagrees with beat count {beats:.1f} bpm"
        )
        if flags is not None:
            flags.append("hr_beat_mismatch")
    return hr


def _ac_dc(raw: np.ndarray, detrended: np.ndarray, name: str) -> Tuple[float, float]:
    dc = float(np.mean(raw))
    if not dc > 0:
        raise NonPositiveDC(f"Channel '{name}' has non-positive DC level {dc:.4g}")
    centered = detrended - np.mean(detrended)
    return float(np.sqrt(np.mean(centered * centered))), dc


def estimate_spo2(
    window: SignalTrace,
    detrended: Optional[SignalTrace] = None,
    cal: SpO2Calibration = SpO2Calibration(),
) -> float:
    """
    SpO2 in percent from the red/green ratio of ratios.

    AC is the RMS of the detrended channel (``window`` minus its mean when no
    detrended version is given); DC is the mean of the raw channel.

    Raises:
        MissingChannel: If red or green is absent
        NonPositiveDC: If a channel mean is not positive
        NoDominantPeak: If the green channel has no AC component
    """
    source = detrended if detrended is not None else window
    ac_red, dc_red = _ac_dc(_channel(window, "red"), _channel(source, "red"), "red")
    ac_green, dc_green = _ac_dc(
        _channel(window, "green"), _channel(source, "green"), "green"
    )
    if ac_green <= 0.0:
        raise NoDominantPeak("Green channel has no pulsatile component")
    ratio = (ac_red / dc_red) / (ac_green / dc_green)
    return cal.spo2(ratio)


@dataclass(frozen=True)
class Surrogate:
    name: str
    peak: SpectralPeak
    strength: float


def _baseline_surrogate(signal: np.ndarray, rate: float) -> Surrogate:
    baseline = approx_baseline(signal, rate)
    pulsatile = signal - baseline
    reference = float(np.percentile(pulsatile, 95) - np.percentile(pulsatile, 5))
    peak = spectral_peak(baseline, rate, *RR_BAND_HZ)
    strength = peak.amplitude / reference if reference > 0 else 0.0
    return Surrogate("baseline", peak, strength)


def _amplitude_surrogate(signal: np.ndarray, rate: float) -> Surrogate:
    try:
        peaks = terma_detect(signal, rate, PPG_TERMA)
    except (TooShort, NoPeaksFound) as e:
        raise NoBeats(f"No beats for the amplitude surrogate: {e}") from e
    if peaks.size < MIN_AM_BEATS + 1:
        raise NoBeats(f"Only {peaks.size} beats; need {MIN_AM_BEATS + 1}")
    onsets = ppg_onsets(signal, rate, peaks)
    amplitudes = signal[peaks[1:]] - signal[onsets]
    times = peaks[1:] / rate
    grid = np.arange(times[0], times[-1], 1.0 / AM_RATE_HZ)
    if grid.size < 8:
        raise NoBeats("Beat span too short for the amplitude surrogate")
    series = np.interp(grid, times, amplitudes)
    peak = spectral_peak(series, AM_RATE_HZ, *RR_BAND_HZ)
    reference = float(np.mean(np.abs(amplitudes)))
    strength = peak.amplitude / reference if reference > 0 else 0.0
    return Surrogate("amplitude", peak, strength)


def estimate_rr(
    window: SignalTrace,
    channel: str = "green",
    min_window_s: float = RR_WINDOW_S,
    flags: Optional[List[str]] = None,
) -> float:
    """
    Respiratory rate in breaths/min.

    Two surrogates are built from a window that still carries its baseline:
    the wavelet approximation band, and the beat amplitude series resampled
    to 4 Hz. Each must reach a modulation depth of ``RR_MIN_STRENGTH``; the one
    with the more prominent in-band peak gives the rate. A weak winner appends
    ``rr_low_prominence`` to ``flags``.

    Raises:
        WindowTooShort: If the window is shorter than ``min_window_s``
        NoBeats: If the baseline is unusable and no beats were found
        NoDominantPeak: If neither surrogate carries a respiratory component
    """
    _require_length(window, min_window_s)
    signal = _channel(window, channel)
    rate = window.sample_rate_hz

    candidates: List[Surrogate] = []
    baseline = _baseline_surrogate(signal, rate)
    if baseline.strength >= RR_MIN_STRENGTH:
        candidates.append(baseline)
    try:
        amplitude = _amplitude_surrogate(signal, rate)
    except NoBeats:
        if not candidates:
            raise
    else:
        if amplitude.strength >= RR_MIN_STRENGTH:
            candidates.append(amplitude)
    if not candidates:
        raise NoDominantPeak("No respiratory modulation above the strength threshold")

    best = max(candidates, key=lambda s: s.peak.prominence)
    if best.peak.prominence < RR_MIN_PROMINENCE:
        logger.warning(f"Low RR prominence {best.peak.prominence:.2f} ({best.name})")
        if flags is not None:
            flags.append("rr_low_prominence")
    logger.debug(
        f"RR surrogate {best.name}: {60 * best.peak.freq_hz:.2f} rpm, "
        f"strength {best.strength:.3f}, prominence {best.peak.prominence:.2f}"
    )
    return 60.0 * best.peak.freq_hz


@dataclass(frozen=True, eq=False)
class PreparedTrace:
    """A raw PPG trace with its detrended and baseline-preserving versions."""

    raw: SignalTrace
    detrended: SignalTrace
    with_baseline: SignalTrace

    @classmethod
    def from_raw(cls, raw: SignalTrace) -> "PreparedTrace":
        return cls(raw, detrend_and_denoise(raw), denoise_keep_baseline(raw))

    def window(self, start: int, length: int) -> "PreparedTrace":
        return PreparedTrace(
            self.raw.slice(start, start + length),
            self.detrended.slice(start, start + length),
            self.with_baseline.slice(start, start + length),
        )


def _try(
    vital: str, flags: List[str], func: Any, *args: Any, **kwargs: Any
) -> Optional[float]:
    try:
        return float(func(*args, **kwargs))
    except PulseForgeError as e:
        logger.debug(f"{vital} unavailable: {e}")
        flags.append(f"{vital}_unavailable")
        return None


def estimate_series(
    raw: SignalTrace,
    hr_window_s: float = HR_WINDOW_S,
    rr_window_s: float = RR_WINDOW_S,
    stride_s: float = 1.0,
    cal: SpO2Calibration = SpO2Calibration(),
    channel: str = "green",
) -> List[VitalsEstimate]:
    """
    Estimate all three vitals every ``stride_s`` seconds.

    HR and SpO2 use the ``hr_window_s`` window starting at each step; RR uses
    an ``rr_window_s`` window from the same start and is absent where that
    window would run past the end of the trace.
    """
    prepared = PreparedTrace.from_raw(raw)
    rate = raw.sample_rate_hz
    hr_len = int(round(hr_window_s * rate))
    rr_len = int(round(rr_window_s * rate))
    stride = max(1, int(round(stride_s * rate)))
    starts = [i * stride for i in range(window_count(raw.n_samples, hr_len, stride))]

    def run(start: int) -> VitalsEstimate:
        flags: List[str] = []
        short = prepared.window(start, hr_len)
        hr = _try(
            "hr", flags, estimate_hr, short.detrended, channel, hr_window_s, flags
        )
        spo2 = _try("spo2", flags, estimate_spo2, short.raw, short.detrended, cal)
        rr = None
        if start + rr_len <= raw.n_samples:
            wide = prepared.window(start, rr_len)
            rr = _try(
                "rr",
                flags,
                estimate_rr,
                wide.with_baseline,
                channel,
                rr_window_s,
                flags,
            )
        return VitalsEstimate(
            hr_bpm=hr,
            spo2_pct=spo2,
            rr_rpm=rr,
            window_start_s=raw.t0_s + start / rate,
            window_len_s=hr_len / rate,
            flags=tuple(flags),
        )

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        estimates = list(pool.map(run, starts))
    logger.info(f"Estimated vitals on {len(estimates)} windows")
    return estimates


def write_vitals_csv(estimates: Sequence[VitalsEstimate], path: PathLike) -> None:
    """Write ``t,hr,spo2,rr,flags`` rows; absent vitals are empty cells."""
    frame = pd.DataFrame(
        {
            "t": [e.window_start_s for e in estimates],
            "hr": [e.hr_bpm for e in estimates],
            "spo2": [e.spo2_pct for e in estimates],
            "rr": [e.rr_rpm for e in estimates],
            "flags": [";".join(e.flags) for e in estimates],
        }
    )
    for column in ("hr", "spo2", "rr"):
        frame[column] = frame[column].astype(float)
    write_frame(frame, path)


def absolute_error_stats(
    estimates: Sequence[float], labels: Sequence[float]
) -> Tuple[float, float]:
    """Mean and population standard deviation of the absolute error."""
    est = np.asarray(estimates, dtype=np.float64).ravel()
    ref = np.asarray(labels, dtype=np.float64).ravel()
    if est.size != ref.size:
        raise LengthMismatch(
            f"{est.size} estimates vs {ref.size} labels", module="vitals"
        )
    if est.size == 0:
        return float("nan"), float("nan")
    errors = np.abs(est - ref)
    return float(np.mean(errors)), float(np.std(errors))


def evaluate_vitals(
    estimates: Sequence[VitalsEstimate], labels: Sequence[VitalsEstimate]
) -> Dict[str, Tuple[float, float]]:
    """
    Per-vital (MAE, SAE) over aligned estimate/label lists.

    Windows where either side lacks a vital are skipped for that vital.

    Raises:
        LengthMismatch: If the lists differ in length
    """
    if len(estimates) != len(labels):
        raise LengthMismatch(
            f"{len(estimates)} estimates vs {len(labels)} labels", module="vitals"
        )
    table: Dict[str, Tuple[float, float]] = {}
    for vital in VITALS:
        pairs = [
            (e.get(vital), l.get(vital))
            for e, l in zip(estimates, labels)
            if e.get(vital) is not None and l.get(vital) is not None
        ]
        if pairs:
            est, ref = zip(*pairs)
            table[vital] = absolute_error_stats(est, ref)
    return table


def write_vitals_eval_csv(
    table: Dict[str, Tuple[float, float]], path: PathLike
) -> None:
    frame = pd.DataFrame(
        [(vital, mu, sigma) for vital, (mu, sigma) in table.items()],
        columns=["vital", "mae", "sae"],
    )
    write_frame(frame, path)


def _record_errors(
    raw: SignalTrace,
    labels: LabelSeries,
    vital: str,
    window_s: float,
    stride_s: float,
    channel: str,
    cal: SpO2Calibration,
) -> List[float]:
    prepared = PreparedTrace.from_raw(raw)
    rate = raw.sample_rate_hz
    errors: List[float] = []
    for segment, label in windows(raw, labels, WindowSpec(window_s, stride_s)):
        truth = label.get(vital)
        if truth is None:
            continue
        start = int(round((segment.t0_s - raw.t0_s) * rate))
        part = prepared.window(start, segment.n_samples)
        try:
            if vital == "hr":
                value = estimate_hr(part.detrended, channel, min_window_s=window_s)
            elif vital == "spo2":
                value = estimate_spo2(part.raw, part.detrended, cal)
            else:
                value = estimate_rr(part.with_baseline, channel, min_window_s=window_s)
        except PulseForgeError as e:
            logger.debug(f"{vital} skipped at {segment.t0_s:.1f} s: {e}")
            continue
        errors.append(abs(value - truth))
    return errors


def sweep_window_sizes(
    records: Sequence[Tuple[SignalTrace, LabelSeries]],
    vital: str,
    sizes_s: Sequence[float],
    stride_s: float = 1.0,
    channel: str = "green",
    cal: SpO2Calibration = SpO2Calibration(),
) -> List[Tuple[float, float, float]]:
    """
    Classical-estimator MAE/SAE against window-mean labels for each window size.

    Returns:
        ``(window_s, mae, sae)`` per size, in the order given
    """
    if vital not in VITALS:
        raise MissingChannel(f"Unknown vital '{vital}'")
    rows = []
    for size in sizes_s:
        errors: List[float] = []
        for raw, labels in records:
            errors.extend(
                _record_errors(raw, labels, vital, size, stride_s, channel, cal)
            )
        mae, sae = absolute_error_stats(errors, np.zeros(len(errors)))
        logger.info(
            f"{vital} window {size:g} s: MAE {mae:.3f}, SAE {sae:.3f} "
            f"({len(errors)} windows)"
        )
        rows.append((float(size), mae, sae))
    return rows


def best_channel(
    records: Sequence[Tuple[SignalTrace, LabelSeries]],
    vital: str,
    window_s: float,
    channels: Sequence[str] = ("red", "green", "blue"),
    stride_s: float = 1.0,
) -> Tuple[str, Dict[str, float]]:
    """Channel with the lowest MAE for a single-channel vital (HR or RR)."""
    if vital not in ("hr", "rr"):
        raise MissingChannel(f"Channel selection applies to hr or rr, not '{vital}'")
    scores: Dict[str, float] = {}
    for channel in channels:
        errors: List[float] = []
        for raw, labels in records:
            errors.extend(
                _record_errors(
                    raw, labels, vital, window_s, stride_s, channel, SpO2Calibration()
                )
            )
        scores[channel] = float(np.mean(errors)) if errors else math.inf
    best = min(scores, key=lambda name: scores[name])
    return best, scores


@dataclass(frozen=True)
class StftFeatures:
    """STFT front-end of the vitals head."""

    window_s: float = 2.0
    hop_s: float = 0.5
    max_freq_hz: float = 5.0

    def extract(self, window: SignalTrace) -> np.ndarray:
        """Flattened, frequency-cropped STFT magnitudes of every channel."""
        parts = []
        for index in range(window.n_channels):
            spec = stft(
                window.samples[:, index],
                window.sample_rate_hz,
                self.window_s,
                self.hop_s,
            )
            keep = spec.frequencies() <= self.max_freq_hz
            parts.append(spec.magnitudes[:, keep].ravel())
        return np.concatenate(parts)


def _targets(label: VitalsEstimate, target: str) -> Optional[List[float]]:
    names = VITALS if target == "all" else (target,)
    values = [label.get(name) for name in names]
    if any(v is None for v in values):
        return None
    return [float(v) for v in values]


@dataclass(eq=False)
class VitalsHead:
    """Trained STFT-feature regressor for one vital or all three."""

    network: Network
    target: str
    features: StftFeatures
    x_scaler: Standardizer
    y_scaler: Standardizer
    window_s: float
    held_out: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    history: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def outputs(self) -> Tuple[str, ...]:
        return VITALS if self.target == "all" else (self.target,)

    def predict(self, windows_: Sequence[SignalTrace]) -> np.ndarray:
        """Predictions of shape ``(len(windows_), len(outputs))``."""
        X = np.vstack([self.features.extract(w) for w in windows_])
        if X.shape[1] != self.x_scaler.mean.size:
            raise ShapeMismatch(
                f"Feature size {X.shape[1]} differs from "
                f"the trained {self.x_scaler.mean.size}"
            )
        return self.y_scaler.inverse(
            self.network.forward(self.x_scaler.transform(X), "eval")
        )

    def save(self, path: PathLike) -> None:
        header: Dict[str, Any] = network_header(self.network)
        header.update(
            mode="vitals",
            target=self.target,
            stft={
                "window_s": self.features.window_s,
                "hop_s": self.features.hop_s,
                "max_freq_hz": self.features.max_freq_hz,
                "input_window_s": self.window_s,
            },
            norm_stats={"x": self.x_scaler.to_header(), "y": self.y_scaler.to_header()},
            held_out={name: list(stats) for name, stats in self.held_out.items()},
        )
        write_container(path, header, self.network.parameter_blocks())

    @classmethod
    def load(cls, path: PathLike) -> "VitalsHead":
        header, params = read_container(path)
        if header.get("mode") != "vitals":
            raise ModelFormatError(f"{path} does not hold a vitals head")
        try:
            stft_header = dict(header["stft"])
            window_s = float(stft_header.pop("input_window_s"))
            features = StftFeatures(**stft_header)
            held_out = {
                str(name): (float(mu), float(sigma))
                for name, (mu, sigma) in header.get("held_out", {}).items()
            }
            x_scaler = Standardizer.from_header(header["norm_stats"]["x"])
            y_scaler = Standardizer.from_header(header["norm_stats"]["y"])
            target = str(header["target"])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"{path}: incomplete header ({e})") from e
        return cls(
            network_from_header(header, params),
            target,
            features,
            x_scaler,
            y_scaler,
            window_s,
            held_out,
        )


def train_vitals_head(
    labeled: Sequence[Tuple[SignalTrace, VitalsEstimate]],
    target: str,
    train_config: TrainConfig = HEAD_TRAIN_CONFIG,
    features: StftFeatures = StftFeatures(),
) -> VitalsHead:
    """
    Train an STFT-feature MLP (``feature_dim -> 64 -> 32 -> outputs``).

    Hidden layers use GELU, batch normalization and dropout 0.2. Inputs and
    targets are standardized; 20 % of the windows (seeded) validate. The best
    network's absolute error on those windows, in bpm, % and breaths/min, is
    kept as ``held_out`` ``(mean, std)`` per output.

    Args:
        labeled: ``(window, label)`` pairs, e.g. from ``traces.windows``
        target: ``hr``, ``spo2``, ``rr`` or ``all``

    Raises:
        TooFewWindows: If fewer than 50 windows carry the target
        ShapeMismatch: If the windows differ in length or sample rate
    """
    if target not in VITALS + ("all",):
        raise MissingChannel(f"Unknown target '{target}'")
    rows, ys, lengths = [], [], set()
    for window, label in labeled:
        values = _targets(label, target)
        if values is None:
            continue
        rows.append(features.extract(window))
        ys.append(values)
        lengths.add(round(window.duration_s, 6))
    if len(rows) < MIN_HEAD_WINDOWS:
        raise TooFewWindows(f"{len(rows)} labeled windows; need {MIN_HEAD_WINDOWS}")
    if len(lengths) != 1 or len({row.size for row in rows}) != 1:
        raise ShapeMismatch("Windows differ in length or sample rate")

    X_raw, Y_raw = np.vstack(rows), np.asarray(ys, dtype=np.float64)
    x_scaler, y_scaler = Standardizer.fit(X_raw), Standardizer.fit(Y_raw)
    data = Batch(x_scaler.transform(X_raw), y_scaler.transform(Y_raw))
    order = np.random.default_rng(train_config.seed).permutation(len(data))
    cut = int(round(0.8 * len(data)))
    train, val = data.take(np.sort(order[:cut])), data.take(np.sort(order[cut:]))

    specs = [
        LayerSpec(X_raw.shape[1], 64, "gelu", batchnorm=True, dropout_p=0.2),
        LayerSpec(64, 32, "gelu", batchnorm=True, dropout_p=0.2),
        LayerSpec(32, Y_raw.shape[1], "linear"),
    ]
    model, history = fit(
        init_network(specs, train_config.seed), train, val, train_config
    )
    logger.info(
        f"Trained {target} head on {len(train)} windows; best val MAE "
        f"{model.best_val_loss:.4f} (standardized) at epoch {model.best_epoch}"
    )

    predicted = y_scaler.inverse(model.network.forward(val.inputs, "eval"))
    observed = y_scaler.inverse(val.targets)
    names = VITALS if target == "all" else (target,)
    held_out = {
        name: absolute_error_stats(predicted[:, i], observed[:, i])
        for i, name in enumerate(names)
    }
    for name, (mu, sigma) in held_out.items():
        logger.info(f"Held-out {name} absolute error: {mu:.3f} +- {sigma:.3f}")
    return VitalsHead(
        model.network,
        target,
        features,
        x_scaler,
        y_scaler,
        window_s=lengths.pop(),
        held_out=held_out,
        history=history,
    )


def label_windows(
    raw: SignalTrace,
    labels: LabelSeries,
    hr_window_s: float = HR_WINDOW_S,
    rr_window_s: float = RR_WINDOW_S,
    stride_s: float = 1.0,
) -> List[VitalsEstimate]:
    """
    Window-mean labels aligned one-to-one with ``estimate_series`` output.

    HR and SpO2 labels are averaged over the short window, RR labels over the
    long window from the same start; RR is absent where that window does not fit.
    """
    short = windows(raw, labels, WindowSpec(hr_window_s, stride_s))
    wide = {
        round(label.window_start_s, 6): label.rr_rpm
        for _, label in (
            windows(raw, labels, WindowSpec(rr_window_s, stride_s))
            if raw.duration_s >= rr_window_s
            else []
        )
    }
    return [
        VitalsEstimate(
            hr_bpm=label.hr_bpm,
            spo2_pct=label.spo2_pct,
            rr_rpm=wide.get(round(label.window_start_s, 6)),
            window_start_s=label.window_start_s,
            window_len_s=label.window_len_s,
        )
        for _, label in short
    ]


def predict_series(
    head: VitalsHead, raw: SignalTrace, stride_s: float = 1.0
) -> np.ndarray:
    """
    Head predictions for every window of the length the head was trained on.

    Returns:
        Array of shape ``(windows, outputs)``; row ``i`` starts at
        ``i * stride_s``
    """
    spec = WindowSpec(head.window_s, stride_s)
    segments = list(segment_windows(raw, spec))
    if not segments:
        raise WindowTooShort(
            f"Trace of {raw.duration_s:.2f} s holds no {head.window_s} s window"
        )
    return head.predict(segments)
