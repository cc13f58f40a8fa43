#!/usr/bin/env python3
"""
Tests for __main__.py module
"""

import shutil
import tempfile
import unittest
from io import StringIO
from pathlib import Path
from unittest.mock import patch

from pulseforge.__main__ import create_argument_parser, main, show_version
from pulseforge.config import RESOLVED_CONFIG_NAME, parse_config
from pulseforge.errors import NoBeatsDetected, UsageError


class TestCreateArgumentParser(unittest.TestCase):
    """Test cases for create_argument_parser function"""

    def test_create_argument_parser_returns_parser(self):
        """Test that create_argument_parser returns ArgumentParser"""
        parser = create_argument_parser()

        self.assertEqual(parser.__class__.__name__, "ArgumentParser")

    def test_subcommand_options(self):
        """Test that subcommand options and globals parse together"""
        parser = create_argument_parser()

        args = parser.parse_args(["synth", "--hr", "60", "--seed", "4", "-v"])

        self.assertEqual(args.command, "synth")
        self.assertEqual(args.hr, 60.0)
        self.assertEqual(args.seed, 4)
        self.assertTrue(args.verbose)
        self.assertIsNone(args.config)

    def test_repeated_inputs(self):
        """Test that multi-file inputs are collected as lists"""
        parser = create_argument_parser()

        args = parser.parse_args(["train-p2e", "a.csv", "b.csv", "--mode", "ffnn"])

        self.assertEqual(args.pairs, ["a.csv", "b.csv"])
        self.assertEqual(args.mode, "ffnn")
        self.assertEqual(args.hidden, [256, 256])

    def test_argument_parser_default_values(self):
        """Test argument parser default values"""
        parser = create_argument_parser()

        args = parser.parse_args([])

        self.assertIsNone(args.command)
        self.assertFalse(args.version)


class TestMain(unittest.TestCase):
    """Test cases for main function"""

    @patch("sys.stdout", new_callable=StringIO)
    def test_main_version_mode(self, mock_stdout):
        """Test main function in version mode"""
        exit_code = main(["--version"])

        self.assertEqual(exit_code, 0)
        self.assertIn("pulseforge v", mock_stdout.getvalue())

    @patch("sys.stderr", new_callable=StringIO)
    def test_missing_command(self, mock_stderr):
        """Test that running without a command is a usage error"""
        self.assertEqual(main([]), 2)
        self.assertIn("Error [cli]", mock_stderr.getvalue())

    @patch("sys.stderr", new_callable=StringIO)
    def test_unknown_option(self, mock_stderr):
        """Test that argparse errors map to exit code 2"""
        self.assertEqual(main(["synth", "--bogus"]), 2)

    @patch("sys.stderr", new_callable=StringIO)
    @patch("pulseforge.__main__.run_command")
    def test_domain_error(self, mock_run, mock_stderr):
        """Test that a domain error names its module and exits 1"""
        mock_run.side_effect = NoBeatsDetected("no R peaks")

        exit_code = main(["peaks", "ecg.csv"])

        self.assertEqual(exit_code, 1)
        self.assertIn("Error [cycles]: no R peaks", mock_stderr.getvalue())

    @patch("sys.stderr", new_callable=StringIO)
    @patch("pulseforge.__main__.run_command")
    def test_usage_error(self, mock_run, mock_stderr):
        """Test that a usage error raised while running exits 2"""
        mock_run.side_effect = UsageError("mismatched inputs")
        args = ["evaluate", "--reference", "a", "--reconstructed", "b"]

        self.assertEqual(main(args), 2)
        self.assertIn("mismatched inputs", mock_stderr.getvalue())

    @patch("sys.stderr", new_callable=StringIO)
    @patch("pulseforge.__main__.run_command")
    def test_missing_file(self, mock_run, mock_stderr):
        """Test that a missing input file exits 1"""
        mock_run.side_effect = FileNotFoundError("Trace file not found: x.csv")

        self.assertEqual(main(["vitals", "x.csv"]), 1)
        self.assertIn("Error [cli]", mock_stderr.getvalue())

    @patch("sys.stderr", new_callable=StringIO)
    @patch("pulseforge.__main__.run_command")
    def test_unexpected_error(self, mock_run, mock_stderr):
        """Test that an unexpected exception is reported instead of raised"""
        mock_run.side_effect = RuntimeError("boom")

        self.assertEqual(main(["peaks", "ecg.csv"]), 1)
        self.assertIn("Error [cli]: boom", mock_stderr.getvalue())

    @patch("pulseforge.__main__.show_version")
    def test_show_version_called(self, mock_show_version):
        """Test that --version takes precedence over commands"""
        self.assertEqual(main(["--version"]), 0)
        mock_show_version.assert_called_once()

    @patch("sys.stdout", new_callable=StringIO)
    def test_show_version_output(self, mock_stdout):
        """Test show_version prints a version line"""
        show_version()

        self.assertTrue(mock_stdout.getvalue().startswith("pulseforge v"))


class TestRunCommand(unittest.TestCase):
    """Test cases for running real subcommands"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = Path(tempfile.mkdtemp())
        self.out_dir = self.temp_dir / "out"

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir)

    def _run(self, *args: str) -> int:
        with patch("sys.stderr", new_callable=StringIO):
            return main(list(args))

    def test_synth_writes_record_and_resolved_config(self):
        """Test a synth run end to end"""
        out = str(self.out_dir)

        exit_code = self._run(
            "synth", "--duration", "5", "--rate", "50", "--seed", "3", "--out", out
        )

        self.assertEqual(exit_code, 0)
        for name in ("ppg.csv", "ecg.csv", "labels.csv", "truth.json", "synth.svg"):
            self.assertTrue((self.out_dir / name).exists(), name)
        resolved = parse_config(self.out_dir / RESOLVED_CONFIG_NAME)
        self.assertEqual(resolved.seed, 3)
        self.assertEqual(resolved.params["duration"], "5.0")
        self.assertEqual(resolved.params["rate"], "50.0")

    def test_unwritable_output_reported(self):
        """Test that a failed alignment summary write exits 1 with its module"""
        record = self.temp_dir / "record"
        self._run("synth", "--duration", "30", "--rate", "125", "--out", str(record))
        (self.out_dir / "alignment.json").mkdir(parents=True)
        args = [str(record / "ppg.csv"), str(record / "ecg.csv")]

        with patch("sys.stderr", new_callable=StringIO) as mock_stderr:
            exit_code = main(["segment", *args, "--out", str(self.out_dir)])

        self.assertEqual(exit_code, 1)
        self.assertIn("Error [signal-core]", mock_stderr.getvalue())
        self.assertIn("alignment.json", mock_stderr.getvalue())

    def test_config_file_defaults(self):
        """Test that config values apply and the command line wins"""
        config_path = self.temp_dir / "run.cfg"
        config_path.write_text("duration = 4\nrate = 50\nhr = 60\nseed = 8\n")

        config = str(config_path)
        out = str(self.out_dir)

        exit_code = self._run("synth", "--config", config, "--hr", "90", "--out", out)

        self.assertEqual(exit_code, 0)
        resolved = parse_config(self.out_dir / RESOLVED_CONFIG_NAME)
        self.assertEqual(resolved.seed, 8)
        self.assertEqual(resolved.params["duration"], "4.0")
        self.assertEqual(resolved.params["hr"], "90.0")

    def test_config_key_for_other_command(self):
        """Test that a key the subcommand does not take is rejected"""
        config_path = self.temp_dir / "run.cfg"
        config_path.write_text("window = 8\n")

        with patch("sys.stderr", new_callable=StringIO) as mock_stderr:
            exit_code = main(["synth", "--config", str(config_path)])

        self.assertEqual(exit_code, 1)
        self.assertIn("window", mock_stderr.getvalue())

    def test_bad_config_value(self):
        """Test that an unconvertible config value is reported"""
        config_path = self.temp_dir / "run.cfg"
        config_path.write_text("duration = long\n")

        with patch("pulseforge.__main__.PulseForgeEngine") as mock_engine:
            with patch("sys.stderr", new_callable=StringIO) as mock_stderr:
                exit_code = main(["synth", "--config", str(config_path)])

        self.assertEqual(exit_code, 1)
        self.assertIn("duration", mock_stderr.getvalue())
        mock_engine.assert_not_called()


if __name__ == "__main__":
    unittest.main()
