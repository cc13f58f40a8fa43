"""
Exception hierarchy for pulseforge.

Every error names the module that raised it so the command-line interface can
report ``Error [<module>]: <message>``. Concrete errors also derive from the
builtin they refine, so callers catching ``ValueError`` or ``OSError`` keep
working.
"""

from typing import Optional


class PulseForgeError(Exception):
    """Base class for all domain errors."""

    module = "pulseforge"


# signal-core


class SignalCoreError(PulseForgeError):
    module = "signal-core"


class InvalidTrace(SignalCoreError, ValueError):
    pass


class MissingColumn(SignalCoreError, ValueError):
    pass


class NonNumericCell(SignalCoreError, ValueError):
    """A CSV cell that is not a finite number."""

    def __init__(self, row: int, col: str, value: Optional[str] = None) -> None:
        self.row = row
        self.col = col
        detail = f" ({value!r})" if value is not None else ""
        super().__init__(f"Non-numeric cell at row {row}, column '{col}'{detail}")


class EmptyFile(SignalCoreError, ValueError):
    pass


class DegenerateTrace(SignalCoreError, ValueError):
    pass


class LabelsDoNotCover(SignalCoreError, ValueError):
    pass


class IoError(SignalCoreError, OSError):
    pass


# video-ingest


class VideoError(PulseForgeError):
    module = "video-ingest"


class BadHeader(VideoError, ValueError):
    pass


class BadMagic(BadHeader):
    pass


class PayloadSizeMismatch(VideoError, ValueError):
    pass


class TruncatedPayload(PayloadSizeMismatch):
    pass


class ZeroFrames(VideoError, ValueError):
    pass


class ValueOutOfRange(VideoError, ValueError):
    pass


# preprocess


class PreprocessError(PulseForgeError):
    module = "preprocess"


class SignalTooShort(PreprocessError, ValueError):
    pass


class InconsistentBands(PreprocessError, ValueError):
    pass


# peaks


class PeaksError(PulseForgeError):
    module = "peaks"


class TooShort(PeaksError, ValueError):
    pass


class NoPeaksFound(PeaksError, ValueError):
    pass


class EmptyRPeaks(PeaksError, ValueError):
    pass


class EmptyPeaks(PeaksError, ValueError):
    pass


# cycles


class CyclesError(PulseForgeError):
    module = "cycles"


class NoBeatsDetected(CyclesError, ValueError):
    pass


class NoOverlap(CyclesError, ValueError):
    pass


class RateMismatch(CyclesError, ValueError):
    pass


# spectral


class SpectralError(PulseForgeError):
    module = "spectral"


class BadK(SpectralError, ValueError):
    pass


class WindowTooLong(SpectralError, ValueError):
    pass


class EmptyBand(SpectralError, ValueError):
    pass


# nnkit


class NnkitError(PulseForgeError):
    module = "nnkit"


class DimMismatch(NnkitError, ValueError):
    pass


class ShapeMismatch(NnkitError, ValueError):
    pass


class NonFiniteGradient(NnkitError, ArithmeticError):
    pass


class EmptyDataset(NnkitError, ValueError):
    pass


class ModelFormatError(NnkitError, ValueError):
    pass


# p2e


class P2eError(PulseForgeError):
    module = "p2e"


class EmptyPairs(P2eError, ValueError):
    pass


class SingularSystem(P2eError, ArithmeticError):
    pass


class LengthMismatch(PulseForgeError, ValueError):
    """Paired inputs of unequal length (shared by p2e, vitals and metrics)."""

    def __init__(self, message: str, module: str = "p2e") -> None:
        super().__init__(message)
        self.module = module


# vitals


class VitalsError(PulseForgeError):
    module = "vitals"


class NoDominantPeak(VitalsError, ValueError):
    pass


class MissingChannel(VitalsError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing channel"


class NonPositiveDC(VitalsError, ValueError):
    pass


class NoBeats(VitalsError, ValueError):
    pass


class WindowTooShort(VitalsError, TooShort):
    """A vitals window shorter than the estimator needs."""


class TooFewWindows(VitalsError, ValueError):
    pass


# metrics


class MetricsError(PulseForgeError):
    module = "metrics"


class ConstantInput(MetricsError, ValueError):
    pass


class NoMatchedBeats(MetricsError, ValueError):
    pass


# synthgen / cli


class InvalidConfig(PulseForgeError, ValueError):
    module = "synthgen"

    def __init__(self, message: str, module: str = "synthgen") -> None:
        super().__init__(message)
        self.module = module


class UsageError(PulseForgeError, ValueError):
    module = "cli"
