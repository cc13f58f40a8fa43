"""
Utility functions for pulseforge.

This module provides helpers for logging, output directories, the worker
thread cap and SVG line plots.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import InvalidConfig, IoError  # noqa: E402

THREADS_ENV = "PULSEFORGE_THREADS"

Series = Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]


def setup_logging(
    log_level: str = "INFO", log_file: Optional[Path] = None
) -> logging.Logger:
    """
    Set up logging configuration for the application.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional path to log file. If None, logs to console only

    Returns:
        Configured logger instance
    """
    level_map = {
        "DEBUG": logging.DEBUG,
        "INFO": logging.INFO,
        "WARNING": logging.WARNING,
        "ERROR": logging.ERROR,
        "CRITICAL": logging.CRITICAL,
    }

    level = level_map.get(log_level.upper(), logging.INFO)

    logger = logging.getLogger("pulseforge")
    logger.setLevel(level)
    logger.handlers.clear()

    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def ensure_directory_exists(directory: Path) -> None:
    """
    Ensure a directory exists, creating it if necessary.

    Raises:
        IoError: If the path is a file or the directory cannot be created
    """
    if directory.exists() and not directory.is_dir():
        raise IoError(f"Path exists but is not a directory: {directory}")

    try:
        directory.mkdir(parents=True, exist_ok=True)
    except PermissionError as e:
        raise IoError(f"Permission denied creating directory: {directory}") from e
    except OSError as e:
        raise IoError(f"Failed to create directory: {directory}") from e


def worker_count(default: Optional[int] = None) -> int:
    """
    Number of worker threads: ``PULSEFORGE_THREADS`` if set, else the CPU count.

    Raises:
        InvalidConfig: If the environment variable is not a positive integer
    """
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            count = int(raw)
        except ValueError as e:
            raise InvalidConfig(
                f"{THREADS_ENV} must be an integer: {raw!r}", module="cli"
            ) from e
        if count < 1:
            raise InvalidConfig(
                f"{THREADS_ENV} must be positive: {count}", module="cli"
            )
        return count
    return default or os.cpu_count() or 1


def write_line_plot_svg(
    path: Path,
    series: Dict[str, Series],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> None:
    """
    Write one line per named series to an SVG file.

    A series is either ``y`` (plotted against its index) or ``(x, y)``.
    """
    plt.rcParams["svg.hashsalt"] = "pulseforge"
    figure, axis = plt.subplots(figsize=(8, 3))
    lengths = []
    for name, values in series.items():
        if isinstance(values, tuple):
            x, y = values
        else:
            y = np.asarray(values)
            x = np.arange(y.size)
        axis.plot(x, y, linewidth=0.8, label=name)
        lengths.append(f"{name}={np.size(y)}")
    axis.set_title(title)
    axis.set_xlabel(xlabel)
    axis.set_ylabel(ylabel)
    if len(series) > 1:
        axis.legend(loc="upper right")
    figure.tight_layout()
    try:
        ensure_directory_exists(Path(path).parent)
        figure.savefig(
            path,
            format="svg",
            metadata={"Date": None, "Description": "; ".join(lengths)},
        )
    except OSError as e:
        raise IoError(f"Failed to write plot {path}") from e
    finally:
        plt.close(figure)


def summarize_drops(drops: Dict[str, int]) -> str:
    if not drops:
        return "no beats dropped"
    return ", ".join(f"{count} {reason}" for reason, count in sorted(drops.items()))
