"""
Command-line interface for pulseforge.

This module provides the main entry point and CLI interface.
"""

import argparse
import os
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import __version__
from .config import (
    RunConfig,
    merge_overrides,
    parse_config,
    validate_config,
    write_resolved,
)
from .errors import InvalidConfig, PulseForgeError, UsageError
from .pipeline import PulseForgeEngine
from .utils import THREADS_ENV, setup_logging

# subcommand -> engine method
COMMANDS = {
    "synth": "synth",
    "extract": "extract",
    "preprocess": "preprocess",
    "peaks": "peaks",
    "segment": "segment",
    "train-p2e": "train_p2e",
    "infer-p2e": "infer_p2e",
    "sweep-k": "sweep_k",
    "vitals": "vitals",
    "vitals-eval": "vitals_eval",
    "vitals-sweep": "vitals_sweep",
    "train-vitals": "train_vitals",
    "evaluate": "evaluate",
    "spectrum": "spectrum",
}

GLOBAL_DESTS = (
    "config",
    "seed",
    "log_level",
    "verbose",
    "log_file",
    "out_dir",
    "threads",
    "help",
)
CHANNELS = ("red", "green", "blue")


def _global_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("run options")
    group.add_argument(
        "--config", "-c", type=str, help="Path to a key = value run configuration file"
    )
    group.add_argument(
        "--seed", type=int, default=None, help="Random seed (config or 0 when omitted)"
    )
    group.add_argument(
        "--log-level",
        type=str,
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (config or INFO when omitted)",
    )
    group.add_argument(
        "--verbose", "-v", action="store_true", help="Enable verbose output"
    )
    group.add_argument(
        "--log-file", type=str, default=None, help="Also log to this file"
    )
    group.add_argument(
        "--out",
        "-o",
        dest="out_dir",
        type=str,
        default=None,
        help="Output directory",
    )
    group.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"Worker threads (overrides {THREADS_ENV})",
    )
    return parent


def _vitals_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--hr-window", type=float, default=4.0, help="HR/SpO2 window in seconds"
    )
    parser.add_argument(
        "--rr-window", type=float, default=32.0, help="RR window in seconds"
    )
    parser.add_argument(
        "--stride", type=float, default=1.0, help="Window stride in seconds"
    )
    parser.add_argument(
        "--channel", choices=CHANNELS, default="green", help="Channel for HR and RR"
    )
    parser.add_argument(
        "--cal-a", type=float, default=110.0, help="SpO2 calibration intercept a"
    )
    parser.add_argument(
        "--cal-b", type=float, default=25.0, help="SpO2 calibration slope b"
    )
    parser.add_argument(
        "--head",
        type=str,
        default=None,
        help="Trained vitals head replacing its outputs",
    )


def _training_options(
    parser: argparse.ArgumentParser, epochs: int, batch_size: int
) -> None:
    parser.add_argument(
        "--epochs", type=int, default=epochs, help="Maximum training epochs"
    )
    parser.add_argument(
        "--batch-size", type=int, default=batch_size, help="Mini-batch size"
    )
    parser.add_argument("--lr", type=float, default=1e-3, help="Initial learning rate")


def create_argument_parser() -> argparse.ArgumentParser:
    """
    Create and configure command-line argument parser.

    Returns:
        Configured ArgumentParser instance
    """
    parser = argparse.ArgumentParser(
        description="pulseforge - vitals and ECG synthesis from PPG",
        prog="pulseforge",
    )
    parser.add_argument(
        "--version", action="store_true", help="Show version information"
    )

    parent = _global_options()
    commands = parser.add_subparsers(dest="command", metavar="command")

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        return commands.add_parser(
            name,
            help=help_text,
            description=help_text,
            parents=[parent],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )

    synth = command("synth", "Generate synthetic PPG/ECG records with ground truth")
    synth.add_argument(
        "--hr", type=float, default=75.0, help="Heart rate in bpm (ramp start)"
    )
    synth.add_argument(
        "--hr-end", type=float, default=None, help="Heart rate at the end of a ramp"
    )
    synth.add_argument("--rr", type=float, default=15.0, help="Respiratory rate in rpm")
    synth.add_argument(
        "--spo2", type=float, default=97.0, help="Oxygen saturation in percent"
    )
    synth.add_argument(
        "--snr-db", type=float, default=None, help="White-noise SNR in dB"
    )
    synth.add_argument(
        "--duration", type=float, default=60.0, help="Record length in seconds"
    )
    synth.add_argument("--rate", type=float, default=125.0, help="Sample rate in Hz")
    synth.add_argument(
        "--lag", type=float, default=0.25, help="PPG delay after the R peak in s"
    )
    synth.add_argument(
        "--width-jitter", type=float, default=0.0, help="Per-beat width jitter"
    )
    synth.add_argument(
        "--amplitude-jitter", type=float, default=0.0, help="Per-beat amplitude jitter"
    )
    synth.add_argument(
        "--records", type=int, default=1, help="Records in a random corpus"
    )
    synth.add_argument(
        "--frames", action="store_true", help="Also write a PFS1 frame stream"
    )

    extract = command("extract", "Average the frames of a PFS1 stream into a PPG trace")
    extract.add_argument("stream", help="PFS1 frame stream")
    extract.add_argument(
        "--crop", type=float, default=0.5, help="Central crop fraction"
    )
    extract.add_argument(
        "--rate", type=float, default=None, help="Resample to this rate in Hz"
    )

    preprocess = command("preprocess", "Wavelet denoising and detrending of a trace")
    preprocess.add_argument("trace", help="Trace CSV")
    mode = preprocess.add_mutually_exclusive_group()
    mode.add_argument(
        "--keep-baseline", action="store_true", help="Only remove noise bands"
    )
    mode.add_argument(
        "--baseline-only", action="store_true", help="Only remove the baseline"
    )
    preprocess.add_argument(
        "--levels", type=int, default=None, help="Decomposition depth"
    )

    peaks = command("peaks", "Detect R/P/Q/S/T or systolic peaks and onsets")
    peaks.add_argument("trace", help="Trace CSV")
    peaks.add_argument(
        "--signal", choices=["ecg", "ppg"], default="ecg", help="Signal type"
    )
    peaks.add_argument("--channel", type=str, default=None, help="Channel to analyse")

    segment = command("segment", "Align a PPG/ECG record and cut cycle pairs")
    segment.add_argument("ppg", help="PPG trace CSV")
    segment.add_argument("ecg", help="ECG trace CSV")
    segment.add_argument(
        "--cycle-len", type=int, default=300, help="Samples per cycle"
    )
    segment.add_argument(
        "--ppg-channel", type=str, default="green", help="PPG channel"
    )
    segment.add_argument("--ecg-channel", type=str, default="ecg", help="ECG channel")
    segment.add_argument(
        "--rate", type=float, default=None, help="Resample both to this rate"
    )
    segment.add_argument(
        "--resolve-aliases",
        action="store_true",
        help="Prefer the smallest non-negative lag among one-beat aliases",
    )

    train = command("train-p2e", "Train a PPG-to-ECG translator on cycle pairs")
    train.add_argument("pairs", nargs="+", help="Cycle-pair CSV files, one per record")
    train.add_argument(
        "--mode", choices=["ridge", "ffnn"], default="ridge", help="Model type"
    )
    train.add_argument("--k-ppg", type=int, default=150, help="PPG DCT coefficients")
    train.add_argument("--k-ecg", type=int, default=150, help="ECG DCT coefficients")
    train.add_argument(
        "--ridge-lambda", type=float, default=1.0, help="Ridge penalty"
    )
    train.add_argument(
        "--lambda-search",
        action="store_true",
        help="Pick the ridge penalty on validation pairs",
    )
    train.add_argument(
        "--hidden", type=int, nargs=2, default=[256, 256], help="Hidden sizes"
    )
    train.add_argument(
        "--activation",
        choices=["tanh", "selu"],
        default="tanh",
        help="Hidden activation",
    )
    train.add_argument("--l1", type=float, default=1e-6, help="L1 weight penalty")
    train.add_argument(
        "--train-fraction", type=float, default=0.8, help="Per-record training fraction"
    )
    _training_options(train, epochs=1000, batch_size=100)

    infer = command("infer-p2e", "Reconstruct ECG cycles from PPG cycles")
    infer.add_argument("model", help="Trained P2EM model")
    infer.add_argument("pairs", help="Cycle-pair CSV whose PPG cycles are translated")

    sweep = command("sweep-k", "Held-out error as a function of DCT coefficient count")
    sweep.add_argument("pairs", nargs="+", help="Cycle-pair CSV files, one per record")
    sweep.add_argument(
        "--k-values",
        type=int,
        nargs="+",
        default=[10, 50, 100, 150, 300],
        help="k to try",
    )
    sweep.add_argument(
        "--mode", choices=["ridge", "ffnn"], default="ridge", help="Model type"
    )
    sweep.add_argument(
        "--ridge-lambda", type=float, default=1.0, help="Ridge penalty"
    )
    sweep.add_argument("--holdout", type=int, default=0, help="Whole records held out")
    _training_options(sweep, epochs=1000, batch_size=100)

    vitals = command("vitals", "Estimate HR, SpO2 and RR per window")
    vitals.add_argument("ppg", help="Three-channel PPG trace CSV")
    _vitals_options(vitals)

    vitals_eval = command("vitals-eval", "Score vitals estimates against labels")
    vitals_eval.add_argument("ppg", help="Three-channel PPG trace CSV")
    vitals_eval.add_argument("labels", help="Label CSV")
    _vitals_options(vitals_eval)

    vitals_sweep = command(
        "vitals-sweep", "Estimator error as a function of window size"
    )
    vitals_sweep.add_argument("--ppg", nargs="+", required=True, help="PPG trace CSVs")
    vitals_sweep.add_argument("--labels", nargs="+", required=True, help="Label CSVs")
    vitals_sweep.add_argument(
        "--vital", choices=["hr", "spo2", "rr"], default="hr", help="Vital"
    )
    vitals_sweep.add_argument(
        "--sizes",
        type=float,
        nargs="+",
        default=[2.0, 4.0, 8.0, 16.0, 32.0],
        help="Windows (s)",
    )
    vitals_sweep.add_argument(
        "--stride", type=float, default=1.0, help="Window stride in seconds"
    )
    vitals_sweep.add_argument(
        "--channel", choices=CHANNELS, default="green", help="Channel"
    )
    vitals_sweep.add_argument(
        "--channels", action="store_true", help="Also compare the three channels"
    )

    train_vitals = command("train-vitals", "Train an STFT-feature vitals head")
    train_vitals.add_argument("--ppg", nargs="+", required=True, help="PPG trace CSVs")
    train_vitals.add_argument("--labels", nargs="+", required=True, help="Label CSVs")
    train_vitals.add_argument(
        "--target",
        choices=["hr", "spo2", "rr", "all"],
        default="all",
        help="Head output",
    )
    train_vitals.add_argument(
        "--window", type=float, default=8.0, help="Window in seconds"
    )
    train_vitals.add_argument(
        "--stride", type=float, default=1.0, help="Window stride in seconds"
    )
    _training_options(train_vitals, epochs=300, batch_size=128)

    evaluate = command("evaluate", "Reconstruction report for ECG cycles")
    evaluate.add_argument(
        "--reference", nargs="+", required=True, help="Reference pair CSVs"
    )
    evaluate.add_argument(
        "--reconstructed", nargs="+", required=True, help="Reconstructed pair CSVs"
    )
    evaluate.add_argument(
        "--frechet", action="store_true", help="Add the Frechet distance"
    )

    spectrum = command("spectrum", "STFT magnitudes of a detrended channel")
    spectrum.add_argument("trace", help="Trace CSV")
    spectrum.add_argument("--channel", type=str, default="green", help="Channel")
    spectrum.add_argument("--window", type=float, default=4.0, help="Window in seconds")
    spectrum.add_argument("--hop", type=float, default=1.0, help="Hop in seconds")

    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise UsageError(f"Unknown command: {name}")


def _is_input(action: argparse.Action) -> bool:
    return not action.option_strings or action.required


def _command_actions(subparser: argparse.ArgumentParser) -> List[argparse.Action]:
    return [a for a in subparser._actions if a.dest not in GLOBAL_DESTS]


def _convert(action: argparse.Action, value: str) -> Any:
    """Turn a config-file string into the value the flag would produce."""
    if action.nargs == 0:
        return value.strip().lower() in ("1", "true", "yes", "on")
    convert = action.type or str
    try:
        if action.nargs in ("+", "*") or isinstance(action.nargs, int):
            return [convert(v) for v in re.split(r"[,\s]+", value.strip()) if v]
        return convert(value)
    except (TypeError, ValueError) as e:
        raise InvalidConfig(
            f"Bad value for {action.dest}: {value!r}", module="cli"
        ) from e


def _config_defaults(
    subparser: argparse.ArgumentParser, params: Dict[str, str]
) -> Dict[str, Any]:
    actions = {a.dest: a for a in _command_actions(subparser)}
    defaults = {}
    for key, value in params.items():
        action = actions[key]
        converted = _convert(action, value)
        if action.choices is not None and converted not in action.choices:
            raise InvalidConfig(
                f"{key} must be one of {list(action.choices)}", module="cli"
            )
        defaults[key] = converted
    return defaults


def run_command(
    parser: argparse.ArgumentParser, parsed: argparse.Namespace, args: Optional[list]
) -> int:
    """
    Resolve the configuration and run one subcommand.

    Args:
        parser: The top-level parser
        parsed: Arguments parsed without config-file defaults
        args: The raw argument list, re-parsed once config defaults are set

    Returns:
        Exit code (0 for success)
    """
    subparser = _subparser(parser, parsed.command)
    actions = _command_actions(subparser)
    option_keys = [a.dest for a in actions if not _is_input(a)]
    input_keys = [a.dest for a in actions if _is_input(a)]

    config = parse_config(Path(parsed.config)) if parsed.config else RunConfig()
    validate_config(config, option_keys)
    if config.params:
        subparser.set_defaults(**_config_defaults(subparser, config.params))
        parsed = parser.parse_args(args)

    overrides: Dict[str, Any] = {key: getattr(parsed, key) for key in option_keys}
    overrides.update(seed=parsed.seed, out_dir=parsed.out_dir, threads=parsed.threads)
    overrides["log_level"] = "DEBUG" if parsed.verbose else parsed.log_level
    resolved = merge_overrides(config, overrides)
    for key in input_keys:
        value = getattr(parsed, key)
        if isinstance(value, list):
            value = " ".join(value)
        resolved.inputs[key] = str(value)
    validate_config(resolved, option_keys)

    logger = setup_logging(
        log_level=resolved.log_level,
        log_file=Path(parsed.log_file) if parsed.log_file else None,
    )
    if resolved.threads is not None:
        os.environ[THREADS_ENV] = str(resolved.threads)

    engine = PulseForgeEngine(resolved)
    write_resolved(resolved, engine.out_dir)
    logger.info(f"Running {parsed.command} with seed {resolved.seed}")

    kwargs = {a.dest: getattr(parsed, a.dest) for a in actions}
    for path in getattr(engine, COMMANDS[parsed.command])(**kwargs):
        logger.info(f"Wrote {path}")
    return 0


def _exit_code(exit_request: SystemExit) -> int:
    code = exit_request.code
    if code is None:
        return 0
    return code if isinstance(code, int) else 2


def main(args: Optional[list] = None) -> int:
    """
    Main entry point for the application.

    Args:
        args: Optional list of command-line arguments. If None, uses sys.argv

    Returns:
        Exit code (0 for success, 1 for a domain error, 2 for a usage error)
    """
    parser = create_argument_parser()
    try:
        parsed_args = parser.parse_args(args)
    except SystemExit as e:
        return _exit_code(e)

    # Handle version command
    if parsed_args.version:
        show_version()
        return 0

    if not parsed_args.command:
        parser.print_usage(sys.stderr)
        print("Error [cli]: a command is required", file=sys.stderr)
        return 2

    try:
        return run_command(parser, parsed_args, args)
    except UsageError as e:
        print(f"Error [{e.module}]: {e}", file=sys.stderr)
        return 2
    except PulseForgeError as e:
        print(f"Error [{e.module}]: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"Error [cli]: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return _exit_code(e)
    except Exception as e:
        print(f"Error [cli]: {e}", file=sys.stderr)
        return 1


def show_version() -> None:
    """
    Display version information.
    """
    print(f"pulseforge v{__version__}")
    print("Vitals estimation and ECG synthesis from photoplethysmography")


if __name__ == "__main__":
    sys.exit(main())
