import csv
import json
import math
import tempfile
from pathlib import Path

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from core.reports import EXIT_FAILED, EXIT_OK, Check, Report, parse_config, read_config, run


class ParseConfigTests(SimpleTestCase):
    def test_comments_and_dashes(self):
        text = "# spectrum run\nmodel = gaussian:2   # two dimensions\n\nsphere-degree = 3\n"
        self.assertEqual(parse_config(text), {"model": "gaussian:2", "sphere_degree": "3"})

    def test_malformed_lines(self):
        for text in ("model gaussian:2", " = 3", "degree = 3\ndegree = 4"):
            with self.subTest(text=text), self.assertRaises(ValidationError):
                parse_config(text)

    def test_missing_file(self):
        with self.assertRaises(ValidationError):
            read_config("/nonexistent/workbench.cfg")


class CheckTests(SimpleTestCase):
    def test_bounds(self):
        self.assertTrue(Check.at_most("a", "small", 1e-9, 1e-8).passed)
        self.assertFalse(Check.at_most("a", "small", math.nan, 1e-8).passed)
        self.assertTrue(Check.at_least("b", "large", 0.26, 0.25).passed)
        self.assertTrue(Check.close_to("c", "near", 0.5 + 1e-10, 0.5, 1e-8).passed)
        self.assertFalse(Check.close_to("c", "near", 0.6, 0.5, 1e-8).passed)

    def test_info_has_no_verdict(self):
        check = Check.info("d", "reported only", 3.0)
        self.assertIsNone(check.passed)
        self.assertIsNone(check.tolerance)

    def test_pass_check_needs_tolerance(self):
        with self.assertRaises(ValueError):
            Check("e", "claim", 1.0, 0.0, None, "pass", True)
        with self.assertRaises(ValueError):
            Check("e", "claim", 1.0, kind="other")


def _report(*checks):
    report = Report("spectrum", {"command": "spectrum", "model": "gaussian:1"})
    report.add(*checks)
    return report


class ReportTests(SimpleTestCase):
    def test_failures_decide_exit_code(self):
        good = _report(Check.at_most("a", "small", 0.0, 1.0), Check.info("b", "size", 5.0))
        self.assertTrue(good.passed)
        self.assertEqual(good.exit_code, EXIT_OK)
        bad = _report(Check.at_most("a", "small", 2.0, 1.0), Check.info("b", "size", 5.0))
        self.assertEqual([c.name for c in bad.failures], ["a"])
        self.assertEqual(bad.exit_code, EXIT_FAILED)

    def test_json_without_timing_is_deterministic(self):
        first = _report(Check.at_most("a", "small", math.nan, 1.0))
        second = _report(Check.at_most("a", "small", math.nan, 1.0))
        first.timing["total_seconds"] = 1.0
        second.timing["total_seconds"] = 2.0
        self.assertEqual(first.to_json(timing=False), second.to_json(timing=False))
        data = json.loads(first.to_json())
        self.assertEqual(data["checks"][0]["measured"], "nan")
        self.assertIn("timing", data)
        self.assertIn("jax", data["environment"])

    def test_csv_names_series(self):
        report = _report()
        report.add_series("eigenvalues", [{"index": 0, "value": 0.0}, {"index": 1, "value": 0.5}])
        report.add_series("slopes", [{"label": "d1", "slope": 0.0}])
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "series.csv"
            report.write_csv(path)
            with path.open() as handle:
                rows = list(csv.DictReader(handle))
        self.assertEqual([row["series"] for row in rows], ["eigenvalues", "eigenvalues", "slopes"])
        self.assertEqual(rows[2]["label"], "d1")
        self.assertEqual(rows[2]["index"], "")

    def test_merge_prefixes(self):
        total = Report("all", {})
        part = _report(Check.info("b", "size", 1.0))
        part.add_series("rows", [{"x": 1}])
        total.merge(part, "spectrum")
        self.assertEqual(total.checks[0].name, "spectrum.b")
        self.assertIn("spectrum.rows", total.series)


class RunTests(SimpleTestCase):
    def setUp(self):
        self.calls = []

        def fake(config):
            self.calls.append(config["command"])
            return _report(Check.at_most("ok", "fine", 0.0, 1.0))

        self.suites = {"spectrum": fake, "growth": fake}

    def test_single_suite(self):
        report = run({"command": "growth"}, self.suites)
        self.assertEqual(self.calls, ["growth"])
        self.assertIn("total_seconds", report.timing)

    def test_all_runs_every_suite(self):
        report = run({"command": "all"}, self.suites)
        self.assertEqual(self.calls, ["spectrum", "growth"])
        self.assertEqual([c.name for c in report.checks], ["spectrum.ok", "growth.ok"])
        self.assertTrue(report.passed)

    def test_unknown_command(self):
        with self.assertRaises(ValidationError):
            run({"command": "flow"}, self.suites)
