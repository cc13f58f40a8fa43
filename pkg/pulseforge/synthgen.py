"""
Deterministic synthetic PPG/ECG records with known ground truth.

Beats are placed by integrating the instantaneous heart rate. Each beat
contributes five Gaussian bumps to the ECG (P, Q, R, S, T at fixed offsets
from the R peak) and an asymmetric double-Gaussian pulse to the PPG, delayed
by the pulse transit lag. Respiration enters the PPG as a baseline sinusoid
and as per-beat amplitude modulation. The red channel's pulsatile part is
scaled from green so that the ratio of ratios maps back to the requested
SpO2 through the linear calibration.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidConfig, IoError
from .peaks import FIDUCIAL_KINDS
from .traces import LabelSeries, SignalTrace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
HeartRate = Union[float, Tuple[float, float]]

# kind -> (offset from R in s, amplitude, width sigma in s)
ECG_TEMPLATE: Dict[str, Tuple[float, float, float]] = {
    "P": (-0.20, 0.12, 0.025),
    "Q": (-0.03, -0.12, 0.010),
    "R": (0.00, 1.00, 0.010),
    "S": (0.03, -0.20, 0.010),
    "T": (0.28, 0.30, 0.045),
}

SYSTOLIC_SIGMA_S = (0.06, 0.12)
DIASTOLIC_OFFSET_S = 0.25
DIASTOLIC_SIGMA_S = 0.10
DIASTOLIC_AMPLITUDE = 0.35
REFERENCE_RR_S = 0.8

GREEN_DC, GREEN_AC = 0.5, 0.02
RED_DC = 0.7
BLUE_DC, BLUE_AC = 0.3, 0.01

HR_RANGE_BPM = (30.0, 220.0)
RR_RANGE_RPM = (4.0, 60.0)
SPO2_RANGE_PCT = (50.0, 100.0)
LABEL_RATE_HZ = 1.0


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of one synthetic record.

    ``hr_bpm`` is either a constant or a ``(start, end)`` linear ramp over the
    record. ``width_jitter`` and ``amplitude_jitter`` are the half-widths of
    uniform per-beat multiplicative perturbations (0 disables them).
    """

    hr_bpm: HeartRate = 75.0
    rr_rpm: float = 15.0
    rr_baseline_gain: float = 0.2
    rr_am_gain: float = 0.1
    spo2_pct: float = 97.0
    snr_db: Optional[float] = None
    duration_s: float = 60.0
    rate_hz: float = 125.0
    seed: int = 0
    ppg_ecg_lag_s: float = 0.25
    width_jitter: float = 0.0
    amplitude_jitter: float = 0.0
    calibration_a: float = 110.0
    calibration_b: float = 25.0

    def __post_init__(self) -> None:
        for hr in self.hr_endpoints():
            if not HR_RANGE_BPM[0] <= hr <= HR_RANGE_BPM[1]:
                raise InvalidConfig(f"Heart rate {hr} bpm outside {HR_RANGE_BPM}")
        if not RR_RANGE_RPM[0] <= self.rr_rpm <= RR_RANGE_RPM[1]:
            raise InvalidConfig(
                f"Respiratory rate {self.rr_rpm} rpm outside {RR_RANGE_RPM}"
            )
        if not SPO2_RANGE_PCT[0] <= self.spo2_pct <= SPO2_RANGE_PCT[1]:
            raise InvalidConfig(f"SpO2 {self.spo2_pct}% outside {SPO2_RANGE_PCT}")
        if self.rr_baseline_gain < 0 or self.rr_am_gain < 0:
            raise InvalidConfig("Respiratory modulation gains must be non-negative")
        if self.rr_am_gain >= 1:
            raise InvalidConfig("Amplitude modulation gain must be below 1")
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise InvalidConfig(f"Duration must be positive: {self.duration_s}")
        if not (self.rate_hz > 0 and math.isfinite(self.rate_hz)):
            raise InvalidConfig(f"Sample rate must be positive: {self.rate_hz}")
        if self.seed < 0:
            raise InvalidConfig(f"Seed must be non-negative: {self.seed}")
        if not 0 <= self.ppg_ecg_lag_s < 1.0:
            raise InvalidConfig(f"PPG lag must lie in [0, 1) s: {self.ppg_ecg_lag_s}")
        if not (0 <= self.width_jitter < 0.5 and 0 <= self.amplitude_jitter < 0.5):
            raise InvalidConfig("Jitter amounts must lie in [0, 0.5)")
        if not self.calibration_b > 0:
            raise InvalidConfig(
                f"Calibration slope must be positive: {self.calibration_b}"
            )
        if self.ror() <= 0:
            raise InvalidConfig(
                f"SpO2 {self.spo2_pct}% is not reachable with a={self.calibration_a}"
            )

    def hr_endpoints(self) -> Tuple[float, float]:
        if isinstance(self.hr_bpm, (tuple, list)):
            start, end = self.hr_bpm
            return float(start), float(end)
        return float(self.hr_bpm), float(self.hr_bpm)

    def hr_at(self, times_s: np.ndarray) -> np.ndarray:
        start, end = self.hr_endpoints()
        return start + (end - start) * np.clip(times_s / self.duration_s, 0.0, 1.0)

    def ror(self) -> float:
        """Ratio of ratios implied by ``spo2_pct`` under the calibration."""
        return (self.calibration_a - self.spo2_pct) / self.calibration_b


@dataclass(frozen=True, eq=False)
class SynthTruth:
    """Ground truth of a generated record; all times in seconds."""

    beat_times_s: np.ndarray
    fiducial_times_s: Dict[str, np.ndarray]
    sys_peak_times_s: np.ndarray
    onset_times_s: np.ndarray
    labels: LabelSeries
    rate_hz: float
    config: Dict[str, object] = field(default_factory=dict)

    def indices(self, kind: str) -> np.ndarray:
        """Sample indices of ``kind``: a fiducial kind, ``SYS`` or ``ONSET``."""
        if kind == "SYS":
            times = self.sys_peak_times_s
        elif kind == "ONSET":
            times = self.onset_times_s
        else:
            times = self.fiducial_times_s[kind]
        return np.round(np.asarray(times) * self.rate_hz).astype(np.int64)

    def to_dict(self) -> Dict[str, object]:
        return {
            "rate_hz": self.rate_hz,
            "beat_times_s": self.beat_times_s.tolist(),
            "fiducial_times_s": {
                kind: times.tolist() for kind, times in self.fiducial_times_s.items()
            },
            "sys_peak_times_s": self.sys_peak_times_s.tolist(),
            "onset_times_s": self.onset_times_s.tolist(),
            "labels": {
                "t": self.labels.times_s.tolist(),
                "hr": _as_list(self.labels.hr_bpm),
                "spo2": _as_list(self.labels.spo2_pct),
                "rr": _as_list(self.labels.rr_rpm),
            },
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "SynthTruth":
        labels = data["labels"]
        return cls(
            beat_times_s=np.asarray(data["beat_times_s"], dtype=np.float64),
            fiducial_times_s={
                k: np.asarray(v, dtype=np.float64)
                for k, v in data["fiducial_times_s"].items()
            },
            sys_peak_times_s=np.asarray(data["sys_peak_times_s"], dtype=np.float64),
            onset_times_s=np.asarray(data["onset_times_s"], dtype=np.float64),
            labels=LabelSeries(labels["t"], labels["hr"], labels["spo2"], labels["rr"]),
            rate_hz=float(data["rate_hz"]),
            config=dict(data.get("config", {})),
        )


def _as_list(values: Optional[np.ndarray]) -> Optional[List[float]]:
    return None if values is None else np.asarray(values).tolist()


def beat_times(cfg: SynthConfig) -> np.ndarray:
    """R-peak times: beat k sits where the integrated rate reaches k + 1/2."""
    n = int(round(cfg.duration_s * cfg.rate_hz))
    grid = np.arange(n + 1) / cfg.rate_hz
    phase = cumulative_trapezoid(cfg.hr_at(grid) / 60.0, grid, initial=0.0)
    targets = np.arange(0.5, phase[-1], 1.0)
    return np.interp(targets, phase, grid)


def _add_bump(
    out: np.ndarray,
    times: np.ndarray,
    rate_hz: float,
    center: float,
    amplitude: float,
    sigma_left: float,
    sigma_right: Optional[float] = None,
) -> None:
    sigma_right = sigma_left if sigma_right is None else sigma_right
    lo = max(0, int(math.floor((center - 6 * sigma_left) * rate_hz)))
    hi = min(out.size, int(math.ceil((center + 6 * sigma_right) * rate_hz)) + 1)
    if lo >= hi:
        return
    t = times[lo:hi] - center
    sigma = np.where(t < 0, sigma_left, sigma_right)
    out[lo:hi] += amplitude * np.exp(-0.5 * (t / sigma) ** 2)


def _add_noise(
    signal: np.ndarray, snr_db: Optional[float], rng: np.random.Generator
) -> np.ndarray:
    if snr_db is None:
        return signal
    ac = signal - signal.mean()
    rms = float(np.sqrt(np.mean(ac * ac)))
    return signal + rng.normal(0.0, rms / 10.0 ** (snr_db / 20.0), size=signal.size)


def _local_extremum(
    signal: np.ndarray, lo: int, hi: int, largest: bool
) -> Optional[int]:
    lo, hi = max(0, lo), min(signal.size, hi)
    if hi - lo < 1:
        return None
    segment = signal[lo:hi]
    return lo + int(np.argmax(segment) if largest else np.argmin(segment))


def generate(cfg: SynthConfig) -> Tuple[SignalTrace, SignalTrace, SynthTruth]:
    """
    Generate a record.

    Returns:
        ``(ppg, ecg, truth)``: a red/green/blue PPG trace, a single-channel
        ``ecg`` trace and the ground truth, all at ``cfg.rate_hz``
    """
    rng = np.random.default_rng(cfg.seed)
    n = int(round(cfg.duration_s * cfg.rate_hz))
    times = np.arange(n) / cfg.rate_hz
    beats = beat_times(cfg)
    # the last beat borrows the interval implied by the final heart rate
    tail = beats[-1:] + 60.0 / cfg.hr_at(beats[-1:])
    rr = np.diff(np.concatenate((beats, tail)))

    widths = 1.0 + cfg.width_jitter * rng.uniform(-1.0, 1.0, size=beats.size)
    gains = 1.0 + cfg.amplitude_jitter * rng.uniform(-1.0, 1.0, size=beats.size)
    resp_hz = cfg.rr_rpm / 60.0

    ecg = np.zeros(n)
    pulse = np.zeros(n)
    fiducials: Dict[str, List[float]] = {kind: [] for kind in FIDUCIAL_KINDS}
    centers = []
    for beat, interval, width, gain in zip(beats, rr, widths, gains):
        for kind, (offset, amplitude, sigma) in ECG_TEMPLATE.items():
            # amplitude jitter scales R only
            scale = gain if kind == "R" else 1.0
            _add_bump(
                ecg, times, cfg.rate_hz, beat + offset, amplitude * scale, sigma * width
            )
            if 0.0 <= beat + offset < cfg.duration_s:
                fiducials[kind].append(beat + offset)

        stretch = float(np.clip(interval / REFERENCE_RR_S, 0.6, 1.25)) * width
        modulation = 1.0 + cfg.rr_am_gain * math.sin(2 * math.pi * resp_hz * beat)
        center = beat + cfg.ppg_ecg_lag_s
        sigma_left, sigma_right = (s * stretch for s in SYSTOLIC_SIGMA_S)
        _add_bump(
            pulse, times, cfg.rate_hz, center, modulation, sigma_left, sigma_right
        )
        _add_bump(
            pulse,
            times,
            cfg.rate_hz,
            center + DIASTOLIC_OFFSET_S * stretch,
            modulation * DIASTOLIC_AMPLITUDE * gain,
            DIASTOLIC_SIGMA_S * stretch,
        )
        centers.append(center)

    half_span = int(round(0.15 * cfg.rate_hz))
    sys_peaks = []
    for center in centers:
        index = int(round(center * cfg.rate_hz))
        if 0 <= index < n:
            found = _local_extremum(
                pulse, index - half_span, index + half_span + 1, True
            )
            if found is not None:
                sys_peaks.append(found)
    onsets = [
        _local_extremum(pulse, a, b + 1, False)
        for a, b in zip(sys_peaks[:-1], sys_peaks[1:])
    ]

    waveform = pulse + cfg.rr_baseline_gain * np.sin(2 * math.pi * resp_hz * times)
    red_ac = cfg.ror() * (GREEN_AC / GREEN_DC) * RED_DC
    channels = [
        RED_DC + red_ac * waveform,
        GREEN_DC + GREEN_AC * waveform,
        BLUE_DC + BLUE_AC * waveform,
    ]
    channels = [_add_noise(c, cfg.snr_db, rng) for c in channels]
    ecg_out = _add_noise(ecg, cfg.snr_db, rng)

    label_times = np.arange(0.0, cfg.duration_s, 1.0 / LABEL_RATE_HZ)
    labels = LabelSeries(
        label_times,
        hr_bpm=cfg.hr_at(label_times),
        spo2_pct=np.full(label_times.size, cfg.spo2_pct),
        rr_rpm=np.full(label_times.size, cfg.rr_rpm),
    )
    config = asdict(cfg)
    config["hr_bpm"] = list(cfg.hr_endpoints())
    truth = SynthTruth(
        beat_times_s=beats[beats < cfg.duration_s],
        fiducial_times_s={k: np.asarray(v) for k, v in fiducials.items()},
        sys_peak_times_s=np.asarray(sys_peaks, dtype=np.float64) / cfg.rate_hz,
        onset_times_s=np.asarray(onsets, dtype=np.float64) / cfg.rate_hz,
        labels=labels,
        rate_hz=cfg.rate_hz,
        config=config,
    )
    logger.debug(
        f"Generated {beats.size} beats over {cfg.duration_s:.1f} s "
        f"at {cfg.rate_hz:g} Hz"
    )
    ppg = SignalTrace(np.column_stack(channels), cfg.rate_hz, ("red", "green", "blue"))
    return ppg, SignalTrace(ecg_out, cfg.rate_hz, ("ecg",)), truth


def corpus_configs(
    count: int,
    seed: int = 0,
    hr_range: Tuple[float, float] = (50.0, 120.0),
    rr_range: Tuple[float, float] = (10.0, 24.0),
    spo2_range: Tuple[float, float] = (92.0, 100.0),
    **overrides: object,
) -> List[SynthConfig]:
    """
    ``count`` record configs with rates drawn uniformly from the given ranges.

    ``overrides`` are passed to every ``SynthConfig`` (e.g. ``snr_db=10``).
    """
    if count < 1:
        raise InvalidConfig(f"Corpus size must be positive: {count}")
    rng = np.random.default_rng(seed)
    hrs = rng.uniform(*hr_range, size=count)
    rrs = rng.uniform(*rr_range, size=count)
    spo2s = rng.uniform(*spo2_range, size=count)
    seeds = rng.integers(0, 2**31 - 1, size=count)
    return [
        SynthConfig(
            hr_bpm=float(hr),
            rr_rpm=float(rr),
            spo2_pct=float(spo2),
            seed=int(record_seed),
            **overrides,  # type: ignore[arg-type]
        )
        for hr, rr, spo2, record_seed in zip(hrs, rrs, spo2s, seeds)
    ]


def write_truth_json(truth: SynthTruth, path: PathLike) -> None:
    try:
        text = json.dumps(truth.to_dict(), sort_keys=True, indent=2) + "\n"
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(f"Failed to write truth record {path}") from e


def read_truth_json(path: PathLike) -> SynthTruth:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoError(f"Failed to read truth record {path}") from e
    return SynthTruth.from_dict(data)
