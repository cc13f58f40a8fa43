"""
pulseforge - vitals estimation and ECG synthesis from photoplethysmography.

A toolkit that turns fingertip-video or recorded PPG into heart rate, SpO2
and respiratory rate estimates, and translates PPG cardiac cycles into
single-lead ECG cycles in the DCT domain.
"""

__version__ = "0.1.0"
__author__ = "pulseforge developers"
__email__ = "noreply@example.com"

from .config import RunConfig, parse_config, validate_config
from .cycles import CardiacCyclePair, align, segment_pairs
from .p2e import P2eConfig, P2eModel, train_p2e, translate
from .pipeline import PulseForgeEngine
from .synthgen import SynthConfig, generate
from .traces import LabelSeries, SignalTrace, VitalsEstimate, WindowSpec
from .utils import setup_logging
from .vitals import estimate_hr, estimate_rr, estimate_spo2

__all__ = [
    "RunConfig",
    "parse_config",
    "validate_config",
    "CardiacCyclePair",
    "align",
    "segment_pairs",
    "P2eConfig",
    "P2eModel",
    "train_p2e",
    "translate",
    "PulseForgeEngine",
    "SynthConfig",
    "generate",
    "LabelSeries",
    "SignalTrace",
    "VitalsEstimate",
    "WindowSpec",
    "setup_logging",
    "estimate_hr",
    "estimate_rr",
    "estimate_spo2",
]
