"""
Fingertip-video ingestion.

Reads the raw ``PFS1`` frame-stream container and turns it into a 3-channel
PPG trace by averaging the pixels of a central crop in every frame.
"""

import io
import logging
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .errors import (
    BadHeader,
    BadMagic,
    IoError,
    PayloadSizeMismatch,
    TruncatedPayload,
    ValueOutOfRange,
    ZeroFrames,
)
from .traces import SignalTrace

logger = logging.getLogger(__name__)

MAGIC = b"PFS1"
HEADER_FORMAT = "<4s6I"
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
RGB_LABELS = ("red", "green", "blue")

StreamSource = Union[str, Path, bytes, BinaryIO]


@dataclass(frozen=True)
class FrameStreamHeader:
    width: int
    height: int
    fps_num: int
    fps_den: int
    frame_count: int
    channels: int = 3
    magic: bytes = MAGIC

    @property
    def frame_bytes(self) -> int:
        return self.width * self.height * self.channels

    @property
    def fps(self) -> float:
        return self.fps_num / self.fps_den

    def pack(self) -> bytes:
        return struct.pack(
            HEADER_FORMAT,
            self.magic,
            self.width,
            self.height,
            self.fps_num,
            self.fps_den,
            self.frame_count,
            self.channels,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "FrameStreamHeader":
        if len(raw) < HEADER_SIZE:
            raise BadHeader(f"Header needs {HEADER_SIZE} bytes, got {len(raw)}")
        magic, width, height, fps_num, fps_den, count, channels = struct.unpack(
            HEADER_FORMAT, raw[:HEADER_SIZE]
        )
        if magic != MAGIC:
            raise BadMagic(f"Expected magic {MAGIC!r}, got {magic!r}")
        if width < 1 or height < 1 or fps_num < 1 or fps_den < 1:
            raise BadHeader("width, height and frame rate must be positive")
        if channels != 3:
            raise BadHeader(f"Only 3-channel RGB streams are supported, got {channels}")
        return cls(width, height, fps_num, fps_den, count, channels, magic)


@dataclass(frozen=True)
class CropSpec:
    """Centered crop covering ``fraction`` of each frame axis."""

    fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.fraction <= 1.0:
            raise ValueOutOfRange(f"Crop fraction must be in (0, 1]: {self.fraction}")

    def bounds(self, height: int, width: int) -> tuple:
        crop_h = max(1, int(round(height * self.fraction)))
        crop_w = max(1, int(round(width * self.fraction)))
        top = (height - crop_h) // 2
        left = (width - crop_w) // 2
        return top, top + crop_h, left, left + crop_w


def _open(stream: StreamSource) -> BinaryIO:
    if isinstance(stream, (bytes, bytearray)):
        return io.BytesIO(stream)
    if isinstance(stream, (str, Path)):
        path = Path(stream)
        if not path.exists():
            raise FileNotFoundError(f"Frame stream not found: {path}")
        try:
            return path.open("rb")
        except OSError as e:
            raise IoError(f"Failed to open {path}") from e
    return stream


def extract_ppg(stream: StreamSource, crop: CropSpec = CropSpec()) -> SignalTrace:
    """
    Average the central crop of every frame into a red/green/blue PPG trace.

    Args:
        stream: Path, raw bytes or binary file object holding a PFS1 stream
        crop: Central crop geometry

    Returns:
        SignalTrace with one sample per frame, values in [0, 1]

    Raises:
        BadMagic: If the stream does not start with ``PFS1``
        ZeroFrames: If the header announces no frames
        TruncatedPayload: If fewer frames are present than announced
        PayloadSizeMismatch: If bytes remain after the last frame
    """
    handle = _open(stream)
    owns_handle = not (handle is stream)
    try:
        header = FrameStreamHeader.unpack(handle.read(HEADER_SIZE))
        if header.frame_count == 0:
            raise ZeroFrames("Frame stream contains no frames")
        top, bottom, left, right = crop.bounds(header.height, header.width)
        means = np.empty((header.frame_count, header.channels), dtype=np.float64)
        for index in range(header.frame_count):
            raw = handle.read(header.frame_bytes)
            if len(raw) < header.frame_bytes:
                raise TruncatedPayload(
                    f"Frame {index} truncated: header announces "
                    f"{header.frame_count} frames"
                )
            frame = np.frombuffer(raw, dtype=np.uint8).reshape(
                header.height, header.width, header.channels
            )
            means[index] = frame[top:bottom, left:right].mean(axis=(0, 1))
        if handle.read(1):
            raise PayloadSizeMismatch("Trailing bytes after the last frame")
    finally:
        if owns_handle:
            handle.close()

    logger.info(
        f"Extracted {header.frame_count} frames ({header.width}x{header.height}) "
        f"at {header.fps:.3f} fps"
    )
    return SignalTrace(means / 255.0, header.fps, RGB_LABELS)


def synthesize_frames(
    trace: SignalTrace, width: int, height: int, path: Union[str, Path]
) -> None:
    """
    Encode a 3-channel trace in [0, 1] as uniform-colour PFS1 frames.

    Raises:
        ValueOutOfRange: If any value lies outside [0, 1]
        ZeroFrames: If the trace has no samples
    """
    if trace.n_samples == 0:
        raise ZeroFrames("Cannot synthesize an empty frame stream")
    if trace.n_channels != 3:
        raise BadHeader(
            f"Need 3 channels to synthesize RGB frames, got {trace.n_channels}"
        )
    if np.any(trace.samples < 0.0) or np.any(trace.samples > 1.0):
        raise ValueOutOfRange("Trace values must lie in [0, 1]")

    rate = Fraction(trace.sample_rate_hz).limit_denominator(1000)
    header = FrameStreamHeader(
        width, height, rate.numerator, rate.denominator, trace.n_samples
    )
    pixels = np.rint(trace.samples * 255.0).astype(np.uint8)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            handle.write(header.pack())
            for rgb in pixels:
                handle.write(np.broadcast_to(rgb, (height, width, 3)).tobytes())
    except OSError as e:
        raise IoError(f"Failed to write frame stream {path}") from e
    logger.debug(f"Wrote {trace.n_samples} frames to {path}")
