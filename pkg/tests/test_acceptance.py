#!/usr/bin/env python3
"""
End-to-end acceptance checks on synthetic records
"""

import shutil
import tempfile
import unittest
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from pulseforge.__main__ import main
from pulseforge.peaks import ECG_TERMA, terma_detect
from pulseforge.preprocess import remove_baseline
from pulseforge.synthgen import SynthConfig, generate


def _run(*args: str) -> int:
    with patch("sys.stderr", new_callable=StringIO):
        return main(list(args))


@pytest.mark.slow
class TestBeatRecovery(unittest.TestCase):
    """Detection against the generator's ground truth"""

    def test_r_peaks_recovered(self):
        """Test that at least 99 % of true beats are found within two samples"""
        _, ecg, truth = generate(SynthConfig(hr_bpm=75.0, duration_s=60.0))
        signal = remove_baseline(ecg).channel("ecg")

        found = terma_detect(signal, ecg.sample_rate_hz, ECG_TERMA)
        expected = truth.indices("R")

        hits = sum(1 for t in expected if np.min(np.abs(found - t)) <= 2)
        self.assertGreaterEqual(hits, 0.99 * expected.size)
        self.assertLessEqual(abs(expected.size - 75), 1)


@pytest.mark.slow
class TestCommandChains(unittest.TestCase):
    """Subcommand chains run through the command-line entry point"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir)

    def _dir(self, name: str) -> str:
        return str(self.temp_dir / name)

    def test_vitals_track_synthetic_heart_rate(self):
        """Test synth at 75 bpm followed by vitals"""
        record, vitals = self._dir("record"), self._dir("vitals")

        synth = ["synth", "--hr", "75", "--spo2", "97.5", "--duration", "60"]

        self.assertEqual(_run(*synth, "--out", record), 0)
        self.assertEqual(_run("vitals", f"{record}/ppg.csv", "--out", vitals), 0)

        frame = pd.read_csv(Path(vitals) / "vitals.csv")
        self.assertAlmostEqual(float(frame["hr"].median()), 75.0, delta=1.0)
        self.assertAlmostEqual(float(frame["spo2"].median()), 97.5, delta=1.0)

    def test_ridge_reconstruction_chain(self):
        """Test segment, train-p2e, infer-p2e and evaluate on one record"""
        record = self._dir("record")
        segment, model, infer, report = (
            self._dir(name) for name in ("segment", "model", "infer", "report")
        )
        pairs = f"{segment}/pairs.csv"

        ramp = ["--hr", "70", "--hr-end", "90", "--duration", "60"]

        _run("synth", *ramp, "--out", record)
        _run("segment", f"{record}/ppg.csv", f"{record}/ecg.csv", "--out", segment)
        _run("train-p2e", pairs, "--mode", "ridge", "--out", model)
        _run("infer-p2e", f"{model}/model.p2em", pairs, "--out", infer)
        scored = ["--reference", pairs, "--reconstructed", f"{infer}/reconstructed.csv"]
        exit_code = _run("evaluate", *scored, "--out", report)

        self.assertEqual(exit_code, 0)
        frame = pd.read_csv(Path(report) / "report.csv")
        self.assertGreaterEqual(float(frame["pearson"].iloc[0]), 0.8)

    def test_same_seed_same_bytes(self):
        """Test that data outputs are byte-identical across identical runs"""
        first, second = self._dir("first"), self._dir("second")
        noisy = ["--duration", "20", "--snr-db", "20", "--seed", "11"]

        for out in (first, second):
            _run("synth", *noisy, "--out", out)
            _run("segment", f"{out}/ppg.csv", f"{out}/ecg.csv", "--out", f"{out}/seg")

        for name in ("ppg.csv", "ecg.csv", "labels.csv", "truth.json", "seg/pairs.csv"):
            self.assertEqual(
                (Path(first) / name).read_bytes(),
                (Path(second) / name).read_bytes(),
                name,
            )


if __name__ == "__main__":
    unittest.main()
