"""
Wavelet denoising and detrending of PPG/ECG traces.

A multi-level db4 decomposition splits each channel into an approximation band
(respiratory baseline and ambient-light drift) and detail bands. Zeroing the
two finest detail bands removes high-frequency noise and motion artifacts;
zeroing the approximation as well detrends the signal.

The decomposition depth follows the sample rate: five levels at 30 Hz, one
more per doubling (seven at 125 Hz), so the approximation band keeps the same
edge in hertz. The filters therefore need at least 2 ** levels samples: 32 at
30 Hz but 128 at 125 Hz. The bare ``dwt`` only needs the db4 filter length.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Optional

import numpy as np
import pywt

from .errors import InconsistentBands, SignalTooShort
from .traces import SignalTrace

logger = logging.getLogger(__name__)

DEFAULT_FAMILY = "db4"
DEFAULT_LEVELS = 5
DEFAULT_MODE = "symmetric"
# Sample rate at which the five-level band layout is defined (fingertip video).
REFERENCE_RATE_HZ = 30.0

NOISE_BANDS = frozenset({"detail1", "detail2"})
DETREND_BANDS = frozenset({"approx", "detail1", "detail2"})

Bands = Dict[str, np.ndarray]


def levels_for_rate(rate_hz: float) -> int:
    """Decomposition depth that keeps the five-level band edges of 30 Hz video."""
    return max(1, DEFAULT_LEVELS + int(round(math.log2(rate_hz / REFERENCE_RATE_HZ))))


def band_names(levels: int) -> list:
    return ["approx"] + [f"detail{level}" for level in range(levels, 0, -1)]


@dataclass(frozen=True)
class WaveletPlan:
    """Which bands of a ``levels``-deep decomposition to zero before reconstruction.

    ``levels=None`` selects the depth from the sample rate (``levels_for_rate``).
    """

    family: str = DEFAULT_FAMILY
    levels: Optional[int] = None
    zeroed_bands: FrozenSet[str] = field(default=frozenset())
    mode: str = DEFAULT_MODE

    def resolve_levels(self, rate_hz: float) -> int:
        levels = self.levels if self.levels is not None else levels_for_rate(rate_hz)
        if levels < 1:
            raise InconsistentBands(f"levels must be >= 1, got {levels}")
        unknown = set(self.zeroed_bands) - set(band_names(levels))
        if unknown:
            raise InconsistentBands(
                f"Unknown bands for {levels} levels: {sorted(unknown)}"
            )
        return levels


def dwt(
    signal: np.ndarray,
    family: str = DEFAULT_FAMILY,
    levels: int = DEFAULT_LEVELS,
    mode: str = DEFAULT_MODE,
) -> Bands:
    """
    Multi-level discrete wavelet decomposition.

    Returns:
        Ordered mapping ``approx, detail<levels>, ..., detail1`` (detail1 finest)

    Raises:
        SignalTooShort: If the signal is shorter than the wavelet filter
    """
    # Copy: pywt cannot take read-only buffers (SignalTrace samples are frozen).
    signal = np.array(signal, dtype=np.float64).ravel()
    wavelet = pywt.Wavelet(family)
    if signal.size < wavelet.dec_len:
        raise SignalTooShort(
            f"Signal of {signal.size} samples shorter than {family} filter "
            f"({wavelet.dec_len})"
        )
    if levels < 1:
        raise InconsistentBands(f"levels must be >= 1, got {levels}")
    with warnings.catch_warnings():
        # Deep levels on short windows only trigger a boundary-effect warning.
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec(signal, wavelet, mode=mode, level=levels)
    return dict(zip(band_names(levels), coeffs))


def idwt(
    bands: Bands,
    family: str = DEFAULT_FAMILY,
    original_length: Optional[int] = None,
    mode: str = DEFAULT_MODE,
) -> np.ndarray:
    """
    Inverse of ``dwt``, truncated to ``original_length``.

    Raises:
        InconsistentBands: If bands are missing or have incompatible lengths
    """
    levels = sum(1 for name in bands if name.startswith("detail"))
    expected = band_names(levels)
    if levels < 1 or set(bands) != set(expected):
        raise InconsistentBands(f"Expected bands {expected}, got {sorted(bands)}")
    coeffs = [np.asarray(bands[name], dtype=np.float64) for name in expected]
    try:
        signal = pywt.waverec(coeffs, family, mode=mode)
    except ValueError as e:
        raise InconsistentBands(f"Bands are not structurally consistent: {e}") from e
    if original_length is not None:
        if original_length > signal.size:
            raise InconsistentBands(
                f"Reconstruction has {signal.size} samples, "
                f"fewer than {original_length}"
            )
        signal = signal[:original_length]
    return signal


def zero_bands(bands: Bands, names: Iterable[str]) -> Bands:
    names = set(names)
    return {
        name: (np.zeros_like(values) if name in names else values)
        for name, values in bands.items()
    }


def apply_plan(signal: np.ndarray, rate_hz: float, plan: WaveletPlan) -> np.ndarray:
    """Decompose, zero the plan's bands, reconstruct to the input length."""
    signal = np.asarray(signal, dtype=np.float64).ravel()
    levels = plan.resolve_levels(rate_hz)
    if signal.size < 2**levels:
        raise SignalTooShort(
            f"Signal of {signal.size} samples shorter than 2^{levels} = {2**levels}"
        )
    bands = dwt(signal, plan.family, levels, plan.mode)
    return idwt(
        zero_bands(bands, plan.zeroed_bands), plan.family, signal.size, plan.mode
    )


def _apply_per_channel(
    trace: SignalTrace, plan: WaveletPlan, center: bool
) -> SignalTrace:
    columns = []
    for index in range(trace.n_channels):
        filtered = apply_plan(trace.samples[:, index], trace.sample_rate_hz, plan)
        if center:
            filtered = filtered - filtered.mean()
        columns.append(filtered)
    return trace.with_samples(np.column_stack(columns))


def denoise_keep_baseline(
    trace: SignalTrace, levels: Optional[int] = None
) -> SignalTrace:
    """Zero the two finest detail bands; the baseline is retained."""
    plan = WaveletPlan(levels=levels, zeroed_bands=NOISE_BANDS)
    return _apply_per_channel(trace, plan, center=False)


def detrend_and_denoise(
    trace: SignalTrace, levels: Optional[int] = None
) -> SignalTrace:
    """Zero the approximation and two finest detail bands; output is zero-mean."""
    plan = WaveletPlan(levels=levels, zeroed_bands=DETREND_BANDS)
    return _apply_per_channel(trace, plan, center=True)


def approx_baseline(
    signal: np.ndarray, rate_hz: float, levels: Optional[int] = None
) -> np.ndarray:
    """Reconstruction from the approximation band alone (the slow baseline)."""
    resolved = levels if levels is not None else levels_for_rate(rate_hz)
    details = frozenset(name for name in band_names(resolved) if name != "approx")
    plan = WaveletPlan(levels=resolved, zeroed_bands=details)
    return apply_plan(signal, rate_hz, plan)


def remove_baseline(trace: SignalTrace, levels: Optional[int] = None) -> SignalTrace:
    """Zero only the approximation band; every detail band is kept.

    Used for ECG, whose QRS energy reaches into the two finest bands at
    clinical sample rates.
    """
    plan = WaveletPlan(levels=levels, zeroed_bands=frozenset({"approx"}))
    return _apply_per_channel(trace, plan, center=True)
