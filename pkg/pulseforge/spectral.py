"""
Spectral kernels: orthonormal DCT-II/III, Hann STFT and dominant-frequency
estimation with parabolic peak refinement.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy.signal import get_window

from .errors import BadK, EmptyBand, WindowTooLong

logger = logging.getLogger(__name__)

PAD_FACTOR = 4


@dataclass(frozen=True, eq=False)
class DctVector:
    """Truncated orthonormal DCT-II coefficients of a length-``source_len`` signal."""

    coeffs: np.ndarray
    source_len: int
    norm: str = "ortho"

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.float64).ravel()
        if coeffs.size > self.source_len:
            raise BadK(
                f"{coeffs.size} coefficients exceed source length {self.source_len}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise BadK("DCT coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def k(self) -> int:
        return int(self.coeffs.size)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    magnitudes: np.ndarray
    frame_hop_s: float
    window_s: float
    rate_hz: float

    @property
    def n_frames(self) -> int:
        return int(self.magnitudes.shape[0])

    @property
    def n_bins(self) -> int:
        return int(self.magnitudes.shape[1])

    def frequencies(self) -> np.ndarray:
        window_len = int(round(self.window_s * self.rate_hz))
        return np.fft.rfftfreq(window_len, d=1.0 / self.rate_hz)

    def frame_times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_hop_s


def dct2(x: np.ndarray, k: int) -> DctVector:
    """
    Orthonormal DCT-II of ``x`` truncated to the first ``k`` coefficients.

    Raises:
        BadK: If ``k`` is not in ``[1, len(x)]``
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if not 1 <= k <= x.size:
        raise BadK(f"k={k} outside [1, {x.size}]")
    coeffs = sp_fft.dct(x, type=2, norm="ortho")[:k]
    return DctVector(coeffs, x.size)


def dct2_rows(matrix: np.ndarray, k: int) -> np.ndarray:
    """Row-wise ``dct2`` of a 2-D array, returning the truncated coefficients."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not 1 <= k <= matrix.shape[1]:
        raise BadK(f"k={k} outside [1, {matrix.shape[1]}]")
    return sp_fft.dct(matrix, type=2, norm="ortho", axis=1)[:, :k]


def idct(c: DctVector) -> np.ndarray:
    """DCT-III of the zero-padded coefficients, back to ``source_len`` samples."""
    padded = np.zeros(c.source_len)
    padded[: c.k] = c.coeffs
    return sp_fft.idct(padded, type=2, norm="ortho")


def idct_rows(coeffs: np.ndarray, source_len: int) -> np.ndarray:
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
    padded = np.zeros((coeffs.shape[0], source_len))
    padded[:, : coeffs.shape[1]] = coeffs
    return sp_fft.idct(padded, type=2, norm="ortho", axis=1)


def stft(
    signal: np.ndarray, rate_hz: float, window_s: float, hop_s: float
) -> Spectrogram:
    """
    Hann-windowed magnitude spectrogram.

    Raises:
        WindowTooLong: If the window does not fit inside the signal
    """
    signal = np.asarray(signal, dtype=np.float64).ravel()
    window_len = int(round(window_s * rate_hz))
    hop = max(1, int(round(hop_s * rate_hz)))
    if window_len < 2 or window_len > signal.size:
        raise WindowTooLong(
            f"Window of {window_len} samples does not fit {signal.size} samples"
        )
    frames = sliding_window_view(signal, window_len)[::hop]
    taper = get_window("hann", window_len)
    magnitudes = np.abs(np.fft.rfft(frames * taper, axis=1))
    return Spectrogram(magnitudes, hop / rate_hz, window_len / rate_hz, rate_hz)


def padded_spectrum(signal: np.ndarray, rate_hz: float) -> tuple:
    """Hann-tapered, mean-removed, 4x zero-padded magnitude spectrum."""
    signal = np.asarray(signal, dtype=np.float64).ravel()
    n_fft = PAD_FACTOR * signal.size
    taper = get_window("hann", signal.size)
    magnitude = np.abs(np.fft.rfft((signal - signal.mean()) * taper, n=n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / rate_hz)
    return freqs, magnitude


def band_mask(
    freqs: np.ndarray, rate_hz: float, band_lo: float, band_hi: float
) -> np.ndarray:
    nyquist = rate_hz / 2.0
    if band_lo >= band_hi or band_lo >= nyquist or band_hi <= 0:
        raise EmptyBand(f"Band [{band_lo}, {band_hi}] Hz empty below Nyquist {nyquist}")
    mask = (freqs >= band_lo) & (freqs <= band_hi)
    if not np.any(mask):
        raise EmptyBand(f"No spectral bins inside [{band_lo}, {band_hi}] Hz")
    return mask


def refine_peak(magnitude: np.ndarray, index: int) -> float:
    """Parabolic vertex offset (in bins) over the log-magnitude around ``index``."""
    if index <= 0 or index >= magnitude.size - 1:
        return 0.0
    floor = np.finfo(np.float64).tiny
    alpha, beta, gamma = np.log(magnitude[index - 1 : index + 2] + floor)
    denominator = alpha - 2.0 * beta + gamma
    if denominator >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (alpha - gamma) / denominator, -0.5, 0.5))


@dataclass(frozen=True)
class SpectralPeak:
    """Strongest in-band component of a signal.

    ``amplitude`` is the sinusoid amplitude implied by the Hann-windowed peak;
    ``prominence`` is the peak magnitude over the mean in-band magnitude.
    """

    freq_hz: float
    amplitude: float
    prominence: float


def spectral_peak(
    signal: np.ndarray, rate_hz: float, band_lo: float, band_hi: float
) -> SpectralPeak:
    signal = np.asarray(signal, dtype=np.float64).ravel()
    freqs, magnitude = padded_spectrum(signal, rate_hz)
    mask = band_mask(freqs, rate_hz, band_lo, band_hi)
    candidates = np.flatnonzero(mask)
    index = int(candidates[np.argmax(magnitude[candidates])])
    offset = refine_peak(magnitude, index)
    resolution = freqs[1] - freqs[0]
    freq = float(np.clip(freqs[index] + offset * resolution, band_lo, band_hi))
    in_band_mean = float(np.mean(magnitude[candidates]))
    prominence = magnitude[index] / in_band_mean if in_band_mean > 0 else 0.0
    amplitude = 2.0 * magnitude[index] / np.sum(get_window("hann", signal.size))
    return SpectralPeak(freq, float(amplitude), float(prominence))


def dominant_frequency(
    signal: np.ndarray, rate_hz: float, band_lo: float, band_hi: float
) -> float:
    """
    Strongest in-band frequency of ``signal`` in Hz.

    Raises:
        EmptyBand: If the band is empty or lies above Nyquist
    """
    return spectral_peak(signal, rate_hz, band_lo, band_hi).freq_hz
