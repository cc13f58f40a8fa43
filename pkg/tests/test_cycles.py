#!/usr/bin/env python3
"""
Tests for cycles.py module
"""

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from pulseforge.cycles import (
    PRE_R_FRACTION,
    AlignmentReport,
    CardiacCyclePair,
    align,
    estimate_lag,
    lag_search,
    normalize_cycle,
    pair_beats,
    pairs_from_record,
    pairs_to_arrays,
    pick_channel,
    read_pairs_csv,
    segment_pairs,
    write_pairs_csv,
)
from pulseforge.errors import (
    EmptyPairs,
    MissingColumn,
    NoBeatsDetected,
    NoOverlap,
    RateMismatch,
)
from pulseforge.preprocess import detrend_and_denoise, remove_baseline
from pulseforge.synthgen import SynthConfig, generate
from pulseforge.traces import SignalTrace


class TestLagAndPairing(unittest.TestCase):
    """Test cases for estimate_lag and pair_beats"""

    def test_lag_of_shifted_train(self):
        """Test that a constant delay is recovered"""
        r_times = np.arange(1.0, 30.0, 0.8)

        lag = estimate_lag(r_times, r_times + 0.27, 125.0)

        self.assertAlmostEqual(lag, 0.27, delta=0.01)

    def test_negative_lag_on_regular_rhythm(self):
        """Test that a PPG leading the ECG gives the argmax lag, not an alias"""
        r_times = np.arange(0.0, 60.0, 1.0)

        lag = estimate_lag(r_times, r_times - 0.25, 125.0)

        self.assertAlmostEqual(lag, -0.25, delta=0.01)

    def test_irregular_rhythm_positive_lag(self):
        """Test a long delay on beats with uneven spacing"""
        r_times = np.cumsum(np.random.default_rng(5).uniform(0.7, 1.3, 50))

        lag = estimate_lag(r_times, r_times + 0.95, 125.0)

        self.assertAlmostEqual(lag, 0.95, delta=0.01)

    def test_alias_resolution_is_opt_in_and_reported(self):
        """Test that alias resolution moves a negative lag one beat later"""
        r_times = np.arange(0.0, 60.0, 1.0)

        plain = lag_search(r_times, r_times - 0.25, 125.0)
        lag, resolved = lag_search(r_times, r_times - 0.25, 125.0, resolve_aliases=True)

        self.assertFalse(plain[1])
        self.assertTrue(resolved)
        self.assertAlmostEqual(lag, 0.75, delta=0.01)

    def test_greedy_pairing_with_missing_beat(self):
        """Test that an R peak without a PPG beat is left unpaired"""
        r_times = np.array([1.0, 2.0, 3.0, 4.0])
        ppg_times = np.array([1.3, 3.3, 4.3])

        pairs = pair_beats(r_times, ppg_times, 0.3, 0.4)

        self.assertEqual(pairs, [(0, 0), (2, 1), (3, 2)])


class TestAlign(unittest.TestCase):
    """Test cases for align on a synthetic record"""

    @classmethod
    def setUpClass(cls):
        """Generate and detrend one record"""
        cfg = SynthConfig(hr_bpm=72.0, duration_s=30.0, ppg_ecg_lag_s=0.25)
        ppg, ecg, cls.truth = generate(cfg)
        cls.ppg = detrend_and_denoise(ppg)
        cls.ecg = remove_baseline(ecg)

    def test_lag_near_generator_delay(self):
        """Test that the estimated lag matches the pulse transit delay"""
        report = align(self.ppg, self.ecg)

        self.assertAlmostEqual(report.lag_s, 0.25, delta=0.05)

    def test_every_r_peak_accounted_for(self):
        """Test that paired plus dropped equals the R-peak count"""
        report = align(self.ppg, self.ecg)

        self.assertEqual(report.paired + report.dropped, report.r_peaks.size)
        self.assertEqual(sum(report.drop_reasons.values()), report.dropped)
        self.assertGreaterEqual(report.paired, report.r_peaks.size - 2)

    def test_matches_increase(self):
        """Test that pairs preserve beat order on both sides"""
        report = align(self.ppg, self.ecg)
        r_side = [r for r, _ in report.matches]
        ppg_side = [s for _, s in report.matches]

        self.assertEqual(r_side, sorted(r_side))
        self.assertEqual(ppg_side, sorted(ppg_side))

    def test_rate_mismatch(self):
        """Test that traces at different rates are rejected"""
        slower = SignalTrace(self.ppg.samples[::2], 62.5, self.ppg.channel_labels)

        with self.assertRaises(RateMismatch):
            align(slower, self.ecg)

    def test_no_overlap(self):
        """Test that disjoint traces raise NoOverlap"""
        later = SignalTrace(
            self.ppg.samples,
            self.ppg.sample_rate_hz,
            self.ppg.channel_labels,
            t0_s=100.0,
        )

        with self.assertRaises(NoOverlap):
            align(later, self.ecg)

    def test_flat_ecg(self):
        """Test that an ECG without beats raises NoBeatsDetected"""
        flat = SignalTrace(
            np.zeros(self.ecg.n_samples), self.ecg.sample_rate_hz, ("ecg",)
        )

        with self.assertRaises(NoBeatsDetected):
            align(self.ppg, flat)


class TestSegmentPairs(unittest.TestCase):
    """Test cases for segment_pairs and pairs_from_record"""

    @classmethod
    def setUpClass(cls):
        """Generate one record and its cycle pairs"""
        cfg = SynthConfig(hr_bpm=80.0, duration_s=30.0)
        ppg, ecg, _ = generate(cfg)
        cls.pairs, cls.report, cls.drops = pairs_from_record(
            ppg, ecg, 300, record="rec"
        )

    def test_pairs_have_fixed_length(self):
        """Test that every pair is resampled to L samples"""
        self.assertGreater(len(self.pairs), 30)
        for pair in self.pairs:
            self.assertEqual(pair.ppg.size, 300)
            self.assertEqual(pair.ecg.size, 300)
            self.assertEqual(pair.record, "rec")

    def test_r_peak_at_fixed_position(self):
        """Test that R sits at 30 % of the ECG cycle"""
        position = int(PRE_R_FRACTION * 300)
        for pair in self.pairs:
            self.assertLessEqual(abs(int(np.argmax(pair.ecg)) - position), 1)

    def test_cycles_normalized(self):
        """Test zero mean and unit max-abs on both sides"""
        for pair in self.pairs:
            for cycle in (pair.ppg, pair.ecg):
                self.assertAlmostEqual(float(cycle.mean()), 0.0, places=9)
                self.assertAlmostEqual(float(np.max(np.abs(cycle))), 1.0, places=9)

    def test_rr_interval_matches_rate(self):
        """Test that the stored RR interval reflects 80 bpm"""
        rr = np.array([pair.rr_interval_s for pair in self.pairs])

        np.testing.assert_allclose(rr, 0.75, atol=0.02)

    def test_every_beat_accounted_for(self):
        """Test that segmented plus dropped equals the R-peak count"""
        total = len(self.pairs) + sum(self.drops.values())

        self.assertEqual(total, self.report.r_peaks.size)

    def test_drop_reasons(self):
        """Test the ECG bounds and RR range drop reasons"""
        ecg = np.zeros(400)
        ecg[[10, 110, 210]] = 1.0
        ppg_trace = SignalTrace(np.zeros(400), 125.0, ("green",))
        ecg_trace = SignalTrace(ecg, 125.0, ("ecg",))
        report = AlignmentReport(
            lag_s=0.24,
            paired=3,
            dropped=0,
            r_peaks=np.array([10, 110, 210]),
            sys_peaks=np.array([5, 40, 140, 240]),
            onsets=np.array([20, 100, 200]),
            matches=((10, 40), (110, 140), (210, 240)),
        )
        drops = {}

        pairs = segment_pairs(ppg_trace, ecg_trace, report, 50, drops=drops)

        self.assertEqual(len(pairs), 2)
        self.assertEqual(drops, {"ecg_window_out_of_bounds": 1})
        self.assertEqual(pairs[0].src_ppg_range, (100, 200))

    def test_rr_out_of_range(self):
        """Test that beats slower than 30 bpm are dropped"""
        trace = SignalTrace(np.zeros(1200), 125.0, ("x",))
        report = AlignmentReport(
            lag_s=0.2,
            paired=2,
            dropped=0,
            r_peaks=np.array([300, 600, 900]),
            sys_peaks=np.array([330, 630, 930]),
            onsets=np.array([500, 800]),
            matches=((600, 630), (900, 930)),
        )
        drops = {}

        pairs = segment_pairs(trace, trace, report, 50, drops=drops)

        self.assertEqual(pairs, [])
        self.assertEqual(drops, {"rr_out_of_range": 2})


class TestPairIo(unittest.TestCase):
    """Test cases for the cycle-pair CSV format"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir)

    def test_columns_and_values(self):
        """Test the ppg_*/ecg_*/rr_s layout and its reading back"""
        rng = np.random.default_rng(0)
        pairs = [
            CardiacCyclePair(
                rng.normal(size=8), rng.normal(size=8), rr_interval_s=0.8 + i
            )
            for i in range(3)
        ]
        path = self.temp_dir / "pairs.csv"

        write_pairs_csv(pairs, path)
        loaded = read_pairs_csv(path, record="r1")

        header = path.read_text().splitlines()[0].split(",")
        self.assertEqual(header[0], "ppg_0")
        self.assertEqual(header[8], "ecg_0")
        self.assertEqual(header[-1], "rr_s")
        self.assertEqual(len(loaded), 3)
        np.testing.assert_allclose(loaded[2].ecg, pairs[2].ecg, rtol=1e-15)
        self.assertAlmostEqual(loaded[1].rr_interval_s, 1.8)
        self.assertEqual(loaded[0].record, "r1")

    def test_not_a_pair_file(self):
        """Test that a trace CSV is rejected as a pair file"""
        path = self.temp_dir / "trace.csv"
        path.write_text("t,ecg\n0,1\n")

        with self.assertRaises(MissingColumn):
            read_pairs_csv(path)

    def test_empty_pairs(self):
        """Test that stacking no pairs raises EmptyPairs"""
        with self.assertRaises(EmptyPairs):
            pairs_to_arrays([])


class TestHelpers(unittest.TestCase):
    """Test cases for small cycle helpers"""

    def test_normalize_flat_cycle(self):
        """Test that a flat cycle normalizes to zeros"""
        out = normalize_cycle(np.full(5, 3.0))

        np.testing.assert_array_equal(out, np.zeros(5))

    def test_normalize_scales_to_unit_peak(self):
        """Test zero mean and unit max-abs"""
        out = normalize_cycle(np.array([1.0, 2.0, 6.0]))

        np.testing.assert_allclose(out, [-2.0 / 3.0, -1.0 / 3.0, 1.0])

    def test_pick_channel_single_channel_fallback(self):
        """Test that a single-channel trace serves any channel name"""
        trace = SignalTrace(np.arange(3.0), 1.0, ("pleth",))

        np.testing.assert_array_equal(pick_channel(trace, "green"), [0.0, 1.0, 2.0])

    def test_pick_channel_missing(self):
        """Test that a multi-channel trace without the channel fails"""
        trace = SignalTrace(np.zeros((3, 2)), 1.0, ("a", "b"))

        with self.assertRaises(MissingColumn):
            pick_channel(trace, "green")


if __name__ == "__main__":
    unittest.main()
