#!/usr/bin/env python3
"""
Tests for vitals.py module
"""

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from pulseforge.errors import (
    LengthMismatch,
    MissingChannel,
    NoDominantPeak,
    NonPositiveDC,
    ShapeMismatch,
    TooFewWindows,
    WindowTooShort,
)
from pulseforge.nnkit import TrainConfig
from pulseforge.preprocess import denoise_keep_baseline, detrend_and_denoise
from pulseforge.synthgen import SynthConfig, generate
from pulseforge.traces import SignalTrace, VitalsEstimate, WindowSpec, windows
from pulseforge.vitals import (
    SpO2Calibration,
    VitalsHead,
    absolute_error_stats,
    estimate_hr,
    estimate_rr,
    estimate_series,
    estimate_spo2,
    evaluate_vitals,
    label_windows,
    predict_series,
    train_vitals_head,
    write_vitals_csv,
)


def _record(duration_s: float = 40.0):
    cfg = SynthConfig(
        hr_bpm=72.0, rr_rpm=15.0, spo2_pct=95.0, duration_s=duration_s, rate_hz=30.0
    )
    ppg, _, truth = generate(cfg)
    return ppg, truth


class TestClassicalEstimators(unittest.TestCase):
    """Test cases for the per-window estimators"""

    @classmethod
    def setUpClass(cls):
        """Generate one 40 s record at video frame rate"""
        cls.ppg, cls.truth = _record()

    def test_heart_rate(self):
        """Test HR on an 8 s detrended window"""
        window = detrend_and_denoise(self.ppg).slice(0, 240)

        self.assertAlmostEqual(estimate_hr(window), 72.0, delta=3.0)

    def test_spo2_inverts_calibration(self):
        """Test that the ratio of ratios maps back to the generated SpO2"""
        window = self.ppg.slice(0, 240)
        detrended = detrend_and_denoise(self.ppg).slice(0, 240)

        self.assertAlmostEqual(estimate_spo2(window, detrended), 95.0, delta=1.0)

    def test_respiratory_rate(self):
        """Test RR on a 32 s window that keeps its baseline"""
        window = denoise_keep_baseline(self.ppg).slice(0, 960)

        self.assertAlmostEqual(estimate_rr(window), 15.0, delta=1.5)

    def test_short_windows(self):
        """Test that windows below the minimum length are rejected"""
        with self.assertRaises(WindowTooShort):
            estimate_hr(self.ppg.slice(0, 60))
        with self.assertRaises(WindowTooShort):
            estimate_rr(self.ppg.slice(0, 240))

    def test_missing_channel(self):
        """Test that SpO2 needs both red and green"""
        green_only = self.ppg.select(["green"])

        with self.assertRaises(MissingChannel):
            estimate_spo2(green_only)

    def test_flat_window(self):
        """Test that a constant window has no dominant peak"""
        flat = SignalTrace(np.full(240, 0.5), 30.0, ("green",))

        with self.assertRaises(NoDominantPeak):
            estimate_hr(flat)

    def test_non_positive_dc(self):
        """Test that a channel with a negative mean is rejected"""
        t = np.arange(240) / 30.0
        wave = np.sin(2 * np.pi * 1.2 * t)
        trace = SignalTrace(
            np.column_stack([wave - 1.0, wave + 1.0]), 30.0, ("red", "green")
        )

        with self.assertRaises(NonPositiveDC):
            estimate_spo2(trace)


class TestCalibration(unittest.TestCase):
    """Test cases for SpO2Calibration"""

    def test_ratio_round_trip(self):
        """Test that ratio and spo2 are inverse maps"""
        cal = SpO2Calibration()

        self.assertAlmostEqual(cal.spo2(cal.ratio(95.0)), 95.0)
        self.assertAlmostEqual(cal.ratio(110.0), 0.0)

    def test_clipped_to_percent_range(self):
        """Test that extreme ratios are clipped to [0, 100]"""
        cal = SpO2Calibration()

        self.assertEqual(cal.spo2(10.0), 0.0)
        self.assertEqual(cal.spo2(-1.0), 100.0)

    def test_slope_must_be_positive(self):
        """Test that b <= 0 is rejected"""
        with self.assertRaises(NonPositiveDC):
            SpO2Calibration(b=0.0)


class TestSeries(unittest.TestCase):
    """Test cases for sliding estimation, labels and evaluation"""

    @classmethod
    def setUpClass(cls):
        """Estimate a full 40 s record once"""
        cls.ppg, cls.truth = _record()
        cls.estimates = estimate_series(cls.ppg)

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir)

    def test_one_estimate_per_stride(self):
        """Test window count and start times"""
        self.assertEqual(len(self.estimates), 37)
        self.assertEqual(self.estimates[5].window_start_s, 5.0)
        self.assertEqual(self.estimates[0].window_len_s, 4.0)

    def test_rr_absent_where_long_window_does_not_fit(self):
        """Test that RR is only attempted while 32 s remain"""
        for estimate in self.estimates[9:]:
            self.assertIsNone(estimate.rr_rpm)
            self.assertNotIn("rr_unavailable", estimate.flags)

    def test_heart_rate_tracks_truth(self):
        """Test that most windows estimate HR close to 72 bpm"""
        errors = [abs(e.hr_bpm - 72.0) for e in self.estimates if e.hr_bpm is not None]

        self.assertGreater(len(errors), 30)
        self.assertLess(float(np.median(errors)), 3.0)

    def test_labels_align_with_estimates(self):
        """Test that window labels line up one-to-one with the estimates"""
        labels = label_windows(self.ppg, self.truth.labels)

        self.assertEqual(len(labels), len(self.estimates))
        self.assertEqual(labels[3].window_start_s, self.estimates[3].window_start_s)
        self.assertEqual(labels[8].rr_rpm, 15.0)
        self.assertIsNone(labels[9].rr_rpm)

    def test_evaluation_against_labels(self):
        """Test that the evaluation table covers every estimated vital"""
        labels = label_windows(self.ppg, self.truth.labels)

        table = evaluate_vitals(self.estimates, labels)

        self.assertLess(table["spo2"][0], 1.0)
        self.assertIn("hr", table)

    def test_write_csv(self):
        """Test the t,hr,spo2,rr,flags layout with empty cells"""
        path = self.temp_dir / "vitals.csv"

        write_vitals_csv(self.estimates, path)

        lines = path.read_text().splitlines()
        self.assertEqual(lines[0], "t,hr,spo2,rr,flags")
        self.assertEqual(len(lines), 38)
        self.assertEqual(lines[-1].split(",")[3], "")


class TestErrorStats(unittest.TestCase):
    """Test cases for absolute-error statistics"""

    def test_mae_and_sae(self):
        """Test mean and population std of absolute errors"""
        estimates = [
            VitalsEstimate(hr_bpm=70.0, spo2_pct=96.0),
            VitalsEstimate(hr_bpm=80.0),
        ]
        labels = [
            VitalsEstimate(hr_bpm=72.0, spo2_pct=97.0),
            VitalsEstimate(hr_bpm=76.0, spo2_pct=97.0),
        ]

        table = evaluate_vitals(estimates, labels)

        self.assertEqual(table["hr"], (3.0, 1.0))
        self.assertEqual(table["spo2"], (1.0, 0.0))
        self.assertNotIn("rr", table)

    def test_length_mismatch(self):
        """Test that unequal list lengths are rejected"""
        with self.assertRaises(LengthMismatch):
            evaluate_vitals([VitalsEstimate()], [])
        with self.assertRaises(LengthMismatch):
            absolute_error_stats([1.0, 2.0], [1.0])


class TestVitalsHead(unittest.TestCase):
    """Test cases for the STFT-feature regressor"""

    @classmethod
    def setUpClass(cls):
        """Cut 8 s labeled windows from a 60 s record"""
        cls.ppg, truth = _record(60.0)
        cls.truth_labels = truth.labels
        cls.labeled = windows(cls.ppg, truth.labels, WindowSpec(8.0, 1.0))

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir)

    def test_train_save_load(self):
        """Test that a short training run reloads with identical predictions"""
        config = TrainConfig(batch_size=16, max_epochs=5)
        head = train_vitals_head(self.labeled, "hr", config)
        path = self.temp_dir / "head.p2em"

        head.save(path)
        loaded = VitalsHead.load(path)
        predictions = predict_series(loaded, self.ppg)

        self.assertEqual(loaded.outputs, ("hr",))
        self.assertEqual(loaded.window_s, 8.0)
        self.assertEqual(loaded.held_out, head.held_out)
        self.assertEqual(predictions.shape, (len(self.labeled), 1))
        np.testing.assert_array_equal(predictions, predict_series(head, self.ppg))

    def test_predict_uses_training_window(self):
        """Test that prediction windows match the trained length, not the HR window"""
        config = TrainConfig(batch_size=16, max_epochs=3)
        head = train_vitals_head(self.labeled, "hr", config)

        predictions = predict_series(head, self.ppg, stride_s=2.0)

        self.assertEqual(predictions.shape, (27, 1))
        with self.assertRaises(WindowTooShort):
            predict_series(head, self.ppg.slice(0, 200))

    def test_held_out_error_in_physical_units(self):
        """Test that held-out error is reported in bpm on the validation windows"""
        config = TrainConfig(batch_size=16, max_epochs=3, seed=4)
        head = train_vitals_head(self.labeled, "hr", config)

        order = np.random.default_rng(4).permutation(len(self.labeled))
        cut = int(round(0.8 * len(self.labeled)))
        held = [self.labeled[i] for i in np.sort(order[cut:])]
        predicted = head.predict([window for window, _ in held])[:, 0]
        expected = absolute_error_stats(predicted, [label.hr_bpm for _, label in held])

        self.assertEqual(list(head.held_out), ["hr"])
        np.testing.assert_allclose(head.held_out["hr"], expected, rtol=1e-9)

    def test_mixed_window_lengths_rejected(self):
        """Test that training windows must share one length"""
        short = windows(self.ppg, self.truth_labels, WindowSpec(4.0, 1.0))

        with self.assertRaises(ShapeMismatch):
            train_vitals_head(self.labeled + short, "hr")

    def test_too_few_windows(self):
        """Test that fewer than 50 labeled windows are rejected"""
        with self.assertRaises(TooFewWindows):
            train_vitals_head(self.labeled[:10], "hr")


if __name__ == "__main__":
    unittest.main()
