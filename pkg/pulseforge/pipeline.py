"""
Stage engine for the pulseforge command line.

Each public method of ``PulseForgeEngine`` runs one subcommand: it reads the
input files, calls the library modules and writes its outputs into the run's
output directory.
"""

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import RunConfig
from .cycles import (
    CardiacCyclePair,
    pairs_from_record,
    pick_channel,
    read_pairs_csv,
    write_pairs_csv,
)
from .errors import EmptyPairs, IoError, UsageError
from .metrics import format_markdown, reconstruction_report, write_report_csv
from .nnkit import TrainConfig
from .p2e import (
    LAMBDA_GRID,
    P2eConfig,
    P2eModel,
    split_pairs,
    split_records,
    sweep_k,
    train_p2e,
    translate_many,
    write_sweep_csv,
)
from .peaks import ECG_TERMA, ecg_fiducials, ppg_fiducials, terma_detect
from .preprocess import denoise_keep_baseline, detrend_and_denoise, remove_baseline
from .spectral import dominant_frequency, stft
from .synthgen import SynthConfig, corpus_configs, generate, write_truth_json
from .traces import (
    LabelSeries,
    SignalTrace,
    VitalsEstimate,
    WindowSpec,
    read_labels_csv,
    read_trace_csv,
    resample,
    windows,
    write_frame,
    write_labels_csv,
    write_trace_csv,
)
from .utils import ensure_directory_exists, summarize_drops, write_line_plot_svg
from .video import CropSpec, extract_ppg, synthesize_frames
from .vitals import (
    HR_BAND_HZ,
    HR_WINDOW_S,
    RR_WINDOW_S,
    SpO2Calibration,
    VitalsHead,
    best_channel,
    estimate_series,
    evaluate_vitals,
    label_windows,
    predict_series,
    sweep_window_sizes,
    train_vitals_head,
    write_vitals_csv,
    write_vitals_eval_csv,
)

logger = logging.getLogger(__name__)

PLOT_SECONDS = 10.0
FRAME_SIZE = 8


def _record_name(path: Path) -> str:
    return str(Path(path).with_suffix(""))


def _load_pairs(paths: Sequence[str]) -> List[CardiacCyclePair]:
    pairs: List[CardiacCyclePair] = []
    for path in paths:
        pairs.extend(read_pairs_csv(path, record=_record_name(Path(path))))
    if not pairs:
        raise EmptyPairs(f"No cycle pairs in {', '.join(paths)}")
    return pairs


def _load_records(
    ppg_paths: Sequence[str], label_paths: Sequence[str]
) -> List[Tuple[SignalTrace, LabelSeries]]:
    if len(ppg_paths) != len(label_paths):
        raise UsageError(
            f"{len(ppg_paths)} PPG files but {len(label_paths)} label files"
        )
    return [
        (read_trace_csv(ppg), read_labels_csv(labels))
        for ppg, labels in zip(ppg_paths, label_paths)
    ]


def _head_seconds(trace: SignalTrace, label: str) -> Tuple[np.ndarray, np.ndarray]:
    count = min(trace.n_samples, int(round(PLOT_SECONDS * trace.sample_rate_hz)))
    return trace.times()[:count], trace.channel(label)[:count]


class PulseForgeEngine:
    """Runs pulseforge stages for one resolved configuration."""

    def __init__(self, config: RunConfig) -> None:
        """
        Initialize the engine and create the output directory.

        Args:
            config: Resolved run configuration
        """
        if config is None:
            raise ValueError("Config cannot be None")
        self.config = config
        self.out_dir = Path(config.out_dir) if config.out_dir is not None else Path(".")
        ensure_directory_exists(self.out_dir)

    def _path(self, name: str) -> Path:
        return self.out_dir / name

    def _write_text(self, name: str, text: str) -> Path:
        path = self._path(name)
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise IoError(f"Failed to write {path}") from e
        return path

    def _write_history(
        self, history: Sequence[Tuple[float, float]], title: str
    ) -> List[Path]:
        if not history:
            return []
        losses = np.asarray(history, dtype=np.float64)
        csv_path = self._path("loss.csv")
        frame = pd.DataFrame(
            {
                "epoch": np.arange(losses.shape[0]),
                "train_mae": losses[:, 0],
                "val_mae": losses[:, 1],
            }
        )
        write_frame(frame, csv_path)
        svg_path = self._path("loss.svg")
        write_line_plot_svg(
            svg_path,
            {"train": losses[:, 0], "validation": losses[:, 1]},
            title=title,
            xlabel="epoch",
            ylabel="MAE",
        )
        return [csv_path, svg_path]

    def _train_config(self, epochs: int, batch_size: int, lr: float) -> TrainConfig:
        return TrainConfig(
            batch_size=batch_size, max_epochs=epochs, lr0=lr, seed=self.config.seed
        )

    def synth(
        self,
        hr: float = 75.0,
        hr_end: Optional[float] = None,
        rr: float = 15.0,
        spo2: float = 97.0,
        snr_db: Optional[float] = None,
        duration: float = 60.0,
        rate: float = 125.0,
        lag: float = 0.25,
        width_jitter: float = 0.0,
        amplitude_jitter: float = 0.0,
        records: int = 1,
        frames: bool = False,
    ) -> List[Path]:
        """
        Generate synthetic records with ground truth.

        A single record is written straight into the output directory; a
        corpus (``records > 1``) draws HR, RR and SpO2 per record and writes
        ``rec_000/``, ``rec_001/``, ...
        """
        common = dict(
            snr_db=snr_db,
            duration_s=duration,
            rate_hz=rate,
            ppg_ecg_lag_s=lag,
            width_jitter=width_jitter,
            amplitude_jitter=amplitude_jitter,
        )
        if records < 1:
            raise UsageError(f"--records must be positive: {records}")
        if records == 1:
            heart_rate = hr if hr_end is None else (hr, hr_end)
            configs = [
                SynthConfig(
                    hr_bpm=heart_rate,
                    rr_rpm=rr,
                    spo2_pct=spo2,
                    seed=self.config.seed,
                    **common,  # type: ignore[arg-type]
                )
            ]
            directories = [self.out_dir]
        else:
            configs = corpus_configs(records, self.config.seed, **common)
            directories = [self.out_dir / f"rec_{i:03d}" for i in range(records)]

        written: List[Path] = []
        first: Optional[Tuple[SignalTrace, SignalTrace]] = None
        for cfg, directory in zip(configs, directories):
            ensure_directory_exists(directory)
            ppg, ecg, truth = generate(cfg)
            write_trace_csv(ppg, directory / "ppg.csv")
            write_trace_csv(ecg, directory / "ecg.csv")
            write_labels_csv(truth.labels, directory / "labels.csv")
            write_truth_json(truth, directory / "truth.json")
            written += [
                directory / name
                for name in ("ppg.csv", "ecg.csv", "labels.csv", "truth.json")
            ]
            if frames:
                synthesize_frames(ppg, FRAME_SIZE, FRAME_SIZE, directory / "ppg.pfs")
                written.append(directory / "ppg.pfs")
            logger.info(
                f"Wrote record with {truth.beat_times_s.size} beats to {directory}"
            )
            first = first or (ppg, ecg)

        if first is not None:
            plot = self._path("synth.svg")
            write_line_plot_svg(
                plot,
                {
                    "green": _head_seconds(first[0], "green"),
                    "ecg": _head_seconds(first[1], "ecg"),
                },
                title="Synthetic record",
                xlabel="time (s)",
            )
            written.append(plot)
        return written

    def extract(
        self, stream: str, crop: float = 0.5, rate: Optional[float] = None
    ) -> List[Path]:
        """Average frames of a PFS1 stream into ``ppg.csv``."""
        trace = extract_ppg(Path(stream), CropSpec(crop))
        if rate is not None:
            trace = resample(trace, rate)
        path = self._path("ppg.csv")
        write_trace_csv(trace, path)
        return [path]

    def preprocess(
        self,
        trace: str,
        keep_baseline: bool = False,
        baseline_only: bool = False,
        levels: Optional[int] = None,
    ) -> List[Path]:
        """Wavelet-filter every channel of a trace CSV."""
        raw = read_trace_csv(trace)
        if keep_baseline:
            filtered = denoise_keep_baseline(raw, levels)
        elif baseline_only:
            filtered = remove_baseline(raw, levels)
        else:
            filtered = detrend_and_denoise(raw, levels)
        path = self._path("preprocessed.csv")
        write_trace_csv(filtered, path)
        label = raw.channel_labels[0]
        plot = self._path("preprocess.svg")
        write_line_plot_svg(
            plot,
            {
                "raw": _head_seconds(raw, label),
                "filtered": _head_seconds(filtered, label),
            },
            title=f"Channel {label}",
            xlabel="time (s)",
        )
        return [path, plot]

    def peaks(
        self, trace: str, signal: str = "ecg", channel: Optional[str] = None
    ) -> List[Path]:
        """Detect fiducials and write ``index,time_s,kind`` rows."""
        raw = read_trace_csv(trace)
        rate = raw.sample_rate_hz
        if signal == "ecg":
            prepared = remove_baseline(raw)
            x = pick_channel(prepared, channel or "ecg")
            fiducials = ecg_fiducials(x, rate, terma_detect(x, rate, ECG_TERMA))
        else:
            prepared = detrend_and_denoise(raw)
            x = pick_channel(prepared, channel or "green")
            fiducials = ppg_fiducials(x, rate)
        rows = fiducials.rows()
        frame = pd.DataFrame(
            {
                "index": [index for index, _ in rows],
                "time_s": [raw.t0_s + index / rate for index, _ in rows],
                "kind": [kind for _, kind in rows],
            }
        )
        path = self._path("peaks.csv")
        write_frame(frame, path)
        logger.info(f"Found {len(rows)} landmarks in {trace}")
        return [path]

    def segment(
        self,
        ppg: str,
        ecg: str,
        cycle_len: int = 300,
        ppg_channel: str = "green",
        ecg_channel: str = "ecg",
        rate: Optional[float] = None,
        resolve_aliases: bool = False,
    ) -> List[Path]:
        """Align a PPG/ECG record and write its cycle pairs."""
        ppg_trace = read_trace_csv(ppg)
        ecg_trace = read_trace_csv(ecg)
        if rate is not None:
            ppg_trace, ecg_trace = resample(ppg_trace, rate), resample(ecg_trace, rate)
        elif ppg_trace.sample_rate_hz != ecg_trace.sample_rate_hz:
            ppg_trace = resample(ppg_trace, ecg_trace.sample_rate_hz)
        pairs, report, drops = pairs_from_record(
            ppg_trace,
            ecg_trace,
            cycle_len,
            ppg_channel,
            ecg_channel,
            _record_name(Path(ppg)),
            resolve_aliases,
        )
        path = self._path("pairs.csv")
        write_pairs_csv(pairs, path)
        summary = {
            "lag_s": report.lag_s,
            "paired": report.paired,
            "dropped": report.dropped,
            "segmented": len(pairs),
            "drop_reasons": drops,
            "alias_resolved": report.alias_resolved,
        }
        alignment = self._write_text(
            "alignment.json", json.dumps(summary, sort_keys=True, indent=2) + "\n"
        )
        logger.info(f"{len(pairs)} pairs; {summarize_drops(drops)}")
        return [path, alignment]

    def train_p2e(
        self,
        pairs: Sequence[str],
        mode: str = "ridge",
        k_ppg: int = 150,
        k_ecg: int = 150,
        ridge_lambda: float = 1.0,
        lambda_search: bool = False,
        hidden: Sequence[int] = (256, 256),
        activation: str = "tanh",
        l1: float = 1e-6,
        epochs: int = 1000,
        batch_size: int = 100,
        lr: float = 1e-3,
        train_fraction: float = 0.8,
    ) -> List[Path]:
        """Train a translator on cycle-pair files and save ``model.p2em``."""
        if len(hidden) != 2:
            raise UsageError(f"--hidden takes two layer sizes, got {len(hidden)}")
        all_pairs = _load_pairs(pairs)
        train, val = split_pairs(all_pairs, train_fraction)
        cfg = P2eConfig(
            k_ppg=k_ppg,
            k_ecg=k_ecg,
            cycle_len=all_pairs[0].length,
            mode=mode,
            ridge_lambda=ridge_lambda,
            ffnn_hidden=(int(hidden[0]), int(hidden[1])),
            ffnn_activation=activation,
            ffnn_l1=l1,
        )
        model = train_p2e(
            train,
            cfg,
            val or None,
            self._train_config(epochs, batch_size, lr),
            LAMBDA_GRID if lambda_search else None,
        )
        path = self._path("model.p2em")
        model.save(path)
        return [path] + self._write_history(model.history, f"{mode} training loss")

    def infer_p2e(self, model: str, pairs: str) -> List[Path]:
        """Translate the PPG cycles of a pair file; ECG columns hold the output."""
        translator = P2eModel.load(model)
        source = read_pairs_csv(pairs)
        reconstructed = translate_many(translator, np.vstack([p.ppg for p in source]))
        out = [replace(p, ecg=ecg) for p, ecg in zip(source, reconstructed)]
        path = self._path("reconstructed.csv")
        write_pairs_csv(out, path)
        logger.info(f"Reconstructed {len(out)} ECG cycles")
        return [path]

    def sweep_k(
        self,
        pairs: Sequence[str],
        k_values: Sequence[int] = (10, 50, 100, 150, 300),
        mode: str = "ridge",
        ridge_lambda: float = 1.0,
        holdout: int = 0,
        epochs: int = 1000,
        batch_size: int = 100,
        lr: float = 1e-3,
    ) -> List[Path]:
        """
        Score one translator per coefficient count.

        With ``holdout > 0`` whole records are held out; otherwise the last
        20 % of every record is.
        """
        all_pairs = _load_pairs(pairs)
        held_out: Optional[List[CardiacCyclePair]] = None
        if holdout > 0:
            _, held_records = split_records(
                [p.record for p in all_pairs], holdout, self.config.seed
            )
            held = set(held_records)
            held_out = [p for p in all_pairs if p.record in held]
            all_pairs = [p for p in all_pairs if p.record not in held]
        length = all_pairs[0].length
        cfg = P2eConfig(
            k_ppg=length,
            k_ecg=length,
            cycle_len=length,
            mode=mode,
            ridge_lambda=ridge_lambda,
        )
        rows = sweep_k(
            all_pairs,
            k_values,
            cfg,
            held_out,
            self._train_config(epochs, batch_size, lr),
        )
        path = self._path("sweep.csv")
        write_sweep_csv(rows, path)
        return [path]

    def _estimates(
        self,
        raw: SignalTrace,
        hr_window: float,
        rr_window: float,
        stride: float,
        channel: str,
        cal: SpO2Calibration,
        head: Optional[str],
    ) -> List[VitalsEstimate]:
        estimates = estimate_series(raw, hr_window, rr_window, stride, cal, channel)
        if head is None:
            return estimates
        model = VitalsHead.load(head)
        predictions = predict_series(model, raw, stride)
        if len(predictions) < len(estimates):
            logger.warning(
                f"Head windows of {model.window_s} s cover {len(predictions)} of "
                f"{len(estimates)} windows; the rest keep classical estimates"
            )
        fields = {"hr": "hr_bpm", "spo2": "spo2_pct", "rr": "rr_rpm"}
        updated = list(estimates)
        for index, row in enumerate(predictions[: len(estimates)]):
            values = {fields[name]: float(v) for name, v in zip(model.outputs, row)}
            if "spo2_pct" in values:
                values["spo2_pct"] = float(np.clip(values["spo2_pct"], 0.0, 100.0))
            updated[index] = replace(estimates[index], **values)
        return updated

    def vitals(
        self,
        ppg: str,
        hr_window: float = HR_WINDOW_S,
        rr_window: float = RR_WINDOW_S,
        stride: float = 1.0,
        channel: str = "green",
        cal_a: float = 110.0,
        cal_b: float = 25.0,
        head: Optional[str] = None,
    ) -> List[Path]:
        """Per-window HR/SpO2/RR estimates written to ``vitals.csv``."""
        raw = read_trace_csv(ppg)
        cal = SpO2Calibration(cal_a, cal_b)
        estimates = self._estimates(
            raw, hr_window, rr_window, stride, channel, cal, head
        )
        path = self._path("vitals.csv")
        write_vitals_csv(estimates, path)
        return [path]

    def vitals_eval(
        self,
        ppg: str,
        labels: str,
        hr_window: float = HR_WINDOW_S,
        rr_window: float = RR_WINDOW_S,
        stride: float = 1.0,
        channel: str = "green",
        cal_a: float = 110.0,
        cal_b: float = 25.0,
        head: Optional[str] = None,
    ) -> List[Path]:
        """Estimate vitals and score them against window-mean labels."""
        raw = read_trace_csv(ppg)
        truth = read_labels_csv(labels)
        cal = SpO2Calibration(cal_a, cal_b)
        estimates = self._estimates(
            raw, hr_window, rr_window, stride, channel, cal, head
        )
        reference = label_windows(raw, truth, hr_window, rr_window, stride)
        table = evaluate_vitals(estimates, reference)
        vitals_path = self._path("vitals.csv")
        write_vitals_csv(estimates, vitals_path)
        path = self._path("vitals_eval.csv")
        write_vitals_eval_csv(table, path)
        for vital, (mae, sae) in table.items():
            logger.info(f"{vital}: MAE {mae:.3f}, SAE {sae:.3f}")
        return [vitals_path, path]

    def vitals_sweep(
        self,
        ppg: Sequence[str],
        labels: Sequence[str],
        vital: str = "hr",
        sizes: Sequence[float] = (2.0, 4.0, 8.0, 16.0, 32.0),
        stride: float = 1.0,
        channel: str = "green",
        channels: bool = False,
    ) -> List[Path]:
        """Window-size sweep, optionally followed by a channel comparison."""
        records = _load_records(ppg, labels)
        rows = sweep_window_sizes(records, vital, sizes, stride, channel)
        path = self._path("window_sweep.csv")
        write_frame(pd.DataFrame(rows, columns=["window_s", "mae", "sae"]), path)
        written = [path]
        if channels:
            window = HR_WINDOW_S if vital == "hr" else RR_WINDOW_S
            best, scores = best_channel(records, vital, window, stride_s=stride)
            channel_path = self._path("channels.csv")
            table = pd.DataFrame(sorted(scores.items()), columns=["channel", "mae"])
            write_frame(table, channel_path)
            logger.info(f"Best channel for {vital}: {best}")
            written.append(channel_path)
        return written

    def train_vitals(
        self,
        ppg: Sequence[str],
        labels: Sequence[str],
        target: str = "all",
        window: float = 8.0,
        stride: float = 1.0,
        epochs: int = 300,
        batch_size: int = 128,
        lr: float = 1e-3,
    ) -> List[Path]:
        """Train an STFT-feature vitals head and save ``head.p2em``."""
        labeled = []
        for raw, truth in _load_records(ppg, labels):
            labeled.extend(windows(raw, truth, WindowSpec(window, stride)))
        head = train_vitals_head(
            labeled, target, self._train_config(epochs, batch_size, lr)
        )
        path = self._path("head.p2em")
        head.save(path)
        eval_path = self._path("head_eval.csv")
        write_vitals_eval_csv(head.held_out, eval_path)
        return [path, eval_path] + self._write_history(
            head.history, f"{target} head training loss"
        )

    def evaluate(
        self,
        reference: Sequence[str],
        reconstructed: Sequence[str],
        frechet: bool = False,
    ) -> List[Path]:
        """Compare reference and reconstructed ECG cycles file by file."""
        if len(reference) != len(reconstructed):
            raise UsageError(
                f"{len(reference)} reference files "
                f"but {len(reconstructed)} reconstructions"
            )
        refs: List[np.ndarray] = []
        recs: List[np.ndarray] = []
        rates: List[float] = []
        subjects: List[str] = []
        for ref_path, rec_path in zip(reference, reconstructed):
            ref_pairs = read_pairs_csv(ref_path)
            rec_pairs = read_pairs_csv(rec_path)
            if len(ref_pairs) != len(rec_pairs):
                raise UsageError(
                    f"{ref_path} and {rec_path} hold different cycle counts"
                )
            for ref, rec in zip(ref_pairs, rec_pairs):
                refs.append(ref.ecg)
                recs.append(rec.ecg)
                rates.append(ref.length / ref.rr_interval_s)
                subjects.append(_record_name(Path(ref_path)))
        report = reconstruction_report(refs, recs, rates, subjects, frechet=frechet)
        markdown = self._write_text("report.md", format_markdown(report))
        csv_path = self._path("report.csv")
        write_report_csv(report, csv_path)
        logger.info(
            f"MAE {report.mae:.4f}, Pearson {report.pearson:.4f}, "
            f"Dirichlet {report.dirichlet:.4f} over {report.n_cycles} cycles"
        )
        return [markdown, csv_path]

    def spectrum(
        self,
        trace: str,
        channel: str = "green",
        window: float = 4.0,
        hop: float = 1.0,
    ) -> List[Path]:
        """STFT magnitudes of one detrended channel, one row per frame."""
        raw = read_trace_csv(trace)
        x = detrend_and_denoise(raw).channel(channel)
        spec = stft(x, raw.sample_rate_hz, window, hop)
        columns: Dict[str, np.ndarray] = {"t": raw.t0_s + spec.frame_times()}
        for index, freq in enumerate(spec.frequencies()):
            columns[f"f_{freq:.4f}"] = spec.magnitudes[:, index]
        path = self._path("spectrum.csv")
        write_frame(pd.DataFrame(columns), path)
        peak = dominant_frequency(x, raw.sample_rate_hz, *HR_BAND_HZ)
        logger.info(f"Dominant cardiac frequency {peak:.3f} Hz ({60 * peak:.1f} bpm)")
        plot = self._path("spectrum.svg")
        write_line_plot_svg(
            plot,
            {channel: (spec.frequencies(), spec.magnitudes.mean(axis=0))},
            title="Mean STFT magnitude",
            xlabel="frequency (Hz)",
        )
        return [path, plot]
