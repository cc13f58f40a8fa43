#!/usr/bin/env python3
"""
Tests for pipeline.py module
"""

import json
import shutil
import tempfile
import unittest
from pathlib import Path

import pandas as pd

from pulseforge.config import RunConfig
from pulseforge.cycles import read_pairs_csv
from pulseforge.errors import EmptyPairs, UsageError
from pulseforge.pipeline import PulseForgeEngine
from pulseforge.traces import read_trace_csv


class TestPulseForgeEngine(unittest.TestCase):
    """Test cases for the stage engine on synthetic records"""

    @classmethod
    def setUpClass(cls):
        """Generate one ECG-rate record and one video-rate record"""
        cls.root = Path(tempfile.mkdtemp())
        cls.ecg_dir = cls.root / "ecg_record"
        cls.video_dir = cls.root / "video_record"
        PulseForgeEngine(RunConfig(out_dir=cls.ecg_dir)).synth(
            hr=72.0, duration=30.0, rate=125.0
        )
        PulseForgeEngine(RunConfig(out_dir=cls.video_dir)).synth(
            hr=72.0, rr=15.0, spo2=95.0, duration=40.0, rate=30.0
        )

    @classmethod
    def tearDownClass(cls):
        """Clean up test fixtures"""
        shutil.rmtree(cls.root)

    def setUp(self):
        """Set up a fresh output directory per test"""
        self.out_dir = self.root / self._testMethodName
        self.engine = PulseForgeEngine(RunConfig(seed=1, out_dir=self.out_dir))

    def _segment(self) -> Path:
        return self.engine.segment(
            str(self.ecg_dir / "ppg.csv"), str(self.ecg_dir / "ecg.csv"), cycle_len=100
        )[0]

    def test_engine_requires_config(self):
        """Test that the engine refuses a missing configuration"""
        with self.assertRaises(ValueError):
            PulseForgeEngine(None)

    def test_synth_corpus_layout(self):
        """Test that a corpus is written one directory per record"""
        written = self.engine.synth(duration=5.0, rate=50.0, records=2)

        self.assertTrue((self.out_dir / "rec_000" / "ppg.csv").exists())
        self.assertTrue((self.out_dir / "rec_001" / "truth.json").exists())
        self.assertIn(self.out_dir / "synth.svg", written)

    def test_synth_rejects_empty_corpus(self):
        """Test that zero records is a usage error"""
        with self.assertRaises(UsageError):
            self.engine.synth(records=0)

    def test_extract_from_frames(self):
        """Test that a frame stream averages back to one sample per frame"""
        self.engine.synth(duration=4.0, rate=30.0, frames=True)
        stream = self.out_dir / "ppg.pfs"

        path = self.engine.extract(str(stream))[0]

        trace = read_trace_csv(path)
        self.assertEqual(trace.n_samples, 120)
        self.assertEqual(trace.channel_labels, ("red", "green", "blue"))

    def test_preprocess_keeps_geometry(self):
        """Test that filtering keeps the sample count and writes a plot"""
        path, plot = self.engine.preprocess(str(self.video_dir / "ppg.csv"))

        self.assertEqual(read_trace_csv(path).n_samples, 1200)
        self.assertTrue(plot.exists())

    def test_peaks_table(self):
        """Test that R peaks are listed once per beat"""
        path = self.engine.peaks(str(self.ecg_dir / "ecg.csv"))[0]

        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["index", "time_s", "kind"])
        r_count = int((frame["kind"] == "R").sum())
        self.assertTrue(33 <= r_count <= 36, r_count)

    def test_segment_writes_pairs_and_alignment(self):
        """Test cycle pairs and the alignment summary"""
        path = self._segment()

        pairs = read_pairs_csv(path)
        summary = json.loads((self.out_dir / "alignment.json").read_text())
        self.assertEqual(pairs[0].length, 100)
        self.assertEqual(summary["segmented"], len(pairs))
        self.assertAlmostEqual(summary["lag_s"], 0.25, delta=0.05)
        self.assertGreater(summary["paired"], 30)
        self.assertFalse(summary["alias_resolved"])

    def test_train_infer_evaluate(self):
        """Test the ridge translator from training to the report"""
        pairs = str(self._segment())

        model = self.engine.train_p2e([pairs], k_ppg=20, k_ecg=20, ridge_lambda=1e-3)[0]
        reconstructed = self.engine.infer_p2e(str(model), pairs)[0]
        markdown, report = self.engine.evaluate([pairs], [str(reconstructed)])

        self.assertEqual(len(read_pairs_csv(reconstructed)), len(read_pairs_csv(pairs)))
        self.assertIn("| MAE |", markdown.read_text())
        frame = pd.read_csv(report)
        self.assertIn("R", list(frame["fiducial"]))
        self.assertLess(float(frame["mae"].iloc[0]), 0.5)

    def test_evaluate_against_itself(self):
        """Test that a file scored against itself has zero error"""
        pairs = str(self._segment())

        report = self.engine.evaluate([pairs], [pairs], frechet=True)[1]

        frame = pd.read_csv(report)
        self.assertEqual(float(frame["mae"].iloc[0]), 0.0)
        self.assertEqual(float(frame["frechet"].iloc[0]), 0.0)

    def test_evaluate_file_count_mismatch(self):
        """Test that reference and reconstruction lists must pair up"""
        with self.assertRaises(UsageError):
            self.engine.evaluate(["a.csv"], [])

    def test_sweep_k(self):
        """Test one sweep row per coefficient count"""
        pairs = str(self._segment())

        path = self.engine.sweep_k([pairs], k_values=[5, 20], ridge_lambda=1e-3)[0]

        frame = pd.read_csv(path)
        self.assertEqual(list(frame["k"]), [5, 20])

    def test_train_p2e_hidden_sizes(self):
        """Test that the hidden option needs exactly two sizes"""
        with self.assertRaises(UsageError):
            self.engine.train_p2e(["pairs.csv"], hidden=[8])

    def test_empty_pair_list(self):
        """Test that training without pair files is rejected"""
        with self.assertRaises(EmptyPairs):
            self.engine.train_p2e([])

    def test_vitals_and_evaluation(self):
        """Test vitals estimates and their scores against labels"""
        ppg = str(self.video_dir / "ppg.csv")
        labels = str(self.video_dir / "labels.csv")

        vitals_path, eval_path = self.engine.vitals_eval(ppg, labels)

        self.assertEqual(len(vitals_path.read_text().splitlines()), 38)
        frame = pd.read_csv(eval_path)
        self.assertIn("hr", list(frame["vital"]))
        self.assertIn("spo2", list(frame["vital"]))
        self.assertLess(float(frame.set_index("vital").loc["spo2", "mae"]), 1.0)

    def test_train_vitals_head_and_apply(self):
        """Test head training output and its use on default vitals windows"""
        ppg = str(self.video_dir / "ppg.csv")
        labels = str(self.video_dir / "labels.csv")

        written = self.engine.train_vitals(
            [ppg, ppg], [labels, labels], target="hr", epochs=3, batch_size=16
        )
        head, eval_path = written[0], written[1]
        vitals_path = self.engine.vitals(ppg, head=str(head))[0]

        frame = pd.read_csv(eval_path)
        self.assertEqual(list(frame["vital"]), ["hr"])
        self.assertGreaterEqual(float(frame["mae"][0]), 0.0)
        self.assertEqual(len(vitals_path.read_text().splitlines()), 38)

    def test_vitals_sweep(self):
        """Test one row per window size"""
        ppg = [str(self.video_dir / "ppg.csv")]
        labels = [str(self.video_dir / "labels.csv")]

        path = self.engine.vitals_sweep(ppg, labels, sizes=[4.0, 8.0])[0]

        frame = pd.read_csv(path)
        self.assertEqual(list(frame["window_s"]), [4.0, 8.0])

    def test_vitals_sweep_needs_labels_per_record(self):
        """Test that PPG and label lists must have equal length"""
        with self.assertRaises(UsageError):
            self.engine.vitals_sweep(["a.csv", "b.csv"], ["a_labels.csv"])

    def test_spectrum(self):
        """Test that the STFT table has a time column and frequency columns"""
        path, plot = self.engine.spectrum(str(self.video_dir / "ppg.csv"))

        frame = pd.read_csv(path)
        self.assertEqual(frame.columns[0], "t")
        self.assertTrue(frame.columns[1].startswith("f_"))
        self.assertTrue(plot.exists())


if __name__ == "__main__":
    unittest.main()
