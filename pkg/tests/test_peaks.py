#!/usr/bin/env python3
"""
Tests for peaks.py module
"""

import unittest

import numpy as np

from pulseforge.errors import (
    EmptyPeaks,
    EmptyRPeaks,
    InvalidConfig,
    NoPeaksFound,
    TooShort,
)
from pulseforge.peaks import (
    ECG_TERMA,
    PPG_TERMA,
    FiducialSet,
    TermaParams,
    bandpass,
    ecg_fiducials,
    ppg_fiducials,
    ppg_onsets,
    refine_extremum,
    terma_detect,
)
from pulseforge.preprocess import detrend_and_denoise, remove_baseline
from pulseforge.synthgen import SynthConfig, generate


def _nearest_offsets(found: np.ndarray, truth: np.ndarray) -> np.ndarray:
    return np.array([np.min(np.abs(found - t)) for t in truth])


class TestTermaDetect(unittest.TestCase):
    """Test cases for terma_detect on synthetic ECG"""

    @classmethod
    def setUpClass(cls):
        """Generate one clean record shared by the tests"""
        cfg = SynthConfig(
            hr_bpm=75.0, duration_s=20.0, rr_baseline_gain=0.0, rr_am_gain=0.0
        )
        cls.ppg, cls.ecg, cls.truth = generate(cfg)
        cls.rate = cfg.rate_hz
        cls.ecg_signal = remove_baseline(cls.ecg).channel("ecg")

    def test_every_r_peak_found(self):
        """Test that each true R peak is detected within two samples"""
        found = terma_detect(self.ecg_signal, self.rate, ECG_TERMA)
        truth = self.truth.indices("R")

        self.assertEqual(found.size, truth.size)
        self.assertLessEqual(int(_nearest_offsets(found, truth).max()), 2)

    def test_output_strictly_increasing(self):
        """Test that peaks come back sorted without duplicates"""
        found = terma_detect(self.ecg_signal, self.rate)

        self.assertTrue(np.all(np.diff(found) > 0))

    def test_plain_detector_without_robustness(self):
        """Test the two-average detector with block filtering and refractory off"""
        params = TermaParams(
            0.097, 0.611, 0.08, 8.0, 20.0, min_block_energy_ratio=0.0, refractory_s=0.0
        )

        found = terma_detect(self.ecg_signal, self.rate, params)

        offsets = _nearest_offsets(found, self.truth.indices("R"))
        self.assertLessEqual(int(offsets.max()), 2)

    def test_too_short(self):
        """Test that a signal shorter than two beat windows raises TooShort"""
        with self.assertRaises(TooShort):
            terma_detect(np.ones(100), 125.0, ECG_TERMA)

    def test_flat_signal(self):
        """Test that a zero signal raises NoPeaksFound"""
        with self.assertRaises(NoPeaksFound):
            terma_detect(np.zeros(1000), 125.0, ECG_TERMA)

    def test_systolic_peaks(self):
        """Test PPG systolic peaks against the generator's truth"""
        green = detrend_and_denoise(self.ppg).channel("green")

        fiducials = ppg_fiducials(green, self.rate, PPG_TERMA)
        truth = self.truth.indices("SYS")

        self.assertLessEqual(abs(fiducials.sys_peaks.size - truth.size), 1)
        offsets = _nearest_offsets(fiducials.sys_peaks, truth[1:-1])
        self.assertLessEqual(int(offsets.max()), 3)
        self.assertEqual(fiducials.onsets.size, fiducials.sys_peaks.size - 1)


class TestTermaParams(unittest.TestCase):
    """Test cases for TermaParams validation"""

    def test_event_window_must_be_shorter(self):
        """Test that w_event >= w_cycle is rejected"""
        with self.assertRaises(InvalidConfig):
            TermaParams(0.7, 0.6, 0.08, 8.0, 20.0)

    def test_negative_beta(self):
        """Test that a negative offset is rejected"""
        with self.assertRaises(InvalidConfig):
            TermaParams(0.1, 0.6, -0.1, 8.0, 20.0)

    def test_bandpass_empty_below_nyquist(self):
        """Test that a band entirely above Nyquist is rejected"""
        with self.assertRaises(InvalidConfig):
            bandpass(np.zeros(200), 10.0, 8.0, 20.0)


class TestEcgFiducials(unittest.TestCase):
    """Test cases for ecg_fiducials function"""

    @classmethod
    def setUpClass(cls):
        """Generate a clean ECG and its true R peaks"""
        cfg = SynthConfig(hr_bpm=70.0, duration_s=15.0)
        _, ecg, cls.truth = generate(cfg)
        cls.rate = cfg.rate_hz
        cls.signal = ecg.channel("ecg")

    def test_p_and_t_located(self):
        """Test that P and T land on the template waves"""
        r_peaks = self.truth.indices("R")
        fiducials = ecg_fiducials(self.signal, self.rate, r_peaks)

        for kind in ("P", "T"):
            found = fiducials.indices(kind)
            offsets = _nearest_offsets(found, self.truth.indices(kind))
            self.assertLessEqual(int(offsets.max()), 2, kind)

    def test_valleys_are_negative(self):
        """Test that Q and S fall on the negative deflections around R"""
        r_peaks = self.truth.indices("R")[1:-1]
        fiducials = ecg_fiducials(self.signal, self.rate, r_peaks)

        self.assertTrue(np.all(self.signal[fiducials.q_valleys] < 0))
        self.assertTrue(np.all(self.signal[fiducials.s_valleys] < 0))
        self.assertTrue(np.all(fiducials.q_valleys < r_peaks))
        self.assertTrue(np.all(fiducials.s_valleys > r_peaks))

    def test_windows_clipped_at_signal_start(self):
        """Test that a fiducial with an empty window is omitted"""
        signal = np.zeros(100)
        signal[2] = 1.0

        fiducials = ecg_fiducials(signal, 125.0, [2])

        self.assertNotIn("P", fiducials.beats[0])
        self.assertIn("T", fiducials.beats[0])

    def test_empty_r_peaks(self):
        """Test that no R peaks raises EmptyRPeaks"""
        with self.assertRaises(EmptyRPeaks):
            ecg_fiducials(np.zeros(100), 125.0, [])

    def test_rows_sorted(self):
        """Test that all landmarks are listed in index order"""
        fiducials = ecg_fiducials(self.signal, self.rate, self.truth.indices("R")[:3])

        indices = [index for index, _ in fiducials.rows()]

        self.assertEqual(indices, sorted(indices))
        self.assertEqual(sum(1 for _, kind in fiducials.rows() if kind == "R"), 3)


class TestPpgOnsets(unittest.TestCase):
    """Test cases for ppg_onsets and refine_extremum"""

    def test_onset_is_minimum_between_peaks(self):
        """Test that each onset is the arg-minimum between two peaks"""
        signal = np.array([0, 5, 2, 1, 3, 6, 4, 0, 2, 7, 1], dtype=float)

        onsets = ppg_onsets(signal, 1.0, [1, 5, 9])

        np.testing.assert_array_equal(onsets, [3, 7])

    def test_no_peaks(self):
        """Test that an empty peak list raises EmptyPeaks"""
        with self.assertRaises(EmptyPeaks):
            ppg_onsets(np.zeros(10), 1.0, [])

    def test_refine_parabola_vertex(self):
        """Test that a sampled parabola yields its exact vertex"""
        signal = -((np.arange(11) - 5.3) ** 2)

        self.assertAlmostEqual(refine_extremum(signal, 5), 5.3)

    def test_refine_at_edge(self):
        """Test that an edge index is returned unchanged"""
        self.assertEqual(refine_extremum(np.arange(5.0), 0), 0.0)

    def test_fiducial_set_kind_lookup(self):
        """Test the index accessors of FiducialSet"""
        fiducials = FiducialSet(
            r_peaks=np.array([10, 20]),
            beats=({"R": 10, "P": 5}, {"R": 20, "T": 25}),
        )

        np.testing.assert_array_equal(fiducials.p_peaks, [5])
        np.testing.assert_array_equal(fiducials.t_peaks, [25])
        self.assertEqual(fiducials.q_valleys.size, 0)


if __name__ == "__main__":
    unittest.main()
