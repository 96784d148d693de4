import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command, get_commands, load_command_class
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from core.models import CheckRecord, ExperimentRun
from core.reports import Check, Report


def _failing_report(config):
    report = Report(config["command"], config)
    report.add(Check.at_most("residual", "the residual is small", 1.0, 1e-8))
    return report


class SuiteCommandTests(TestCase):
    def test_spectrum_passes_and_is_stored(self):
        out = StringIO()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "spectrum.json"
            call_command("spectrum", model="gaussian:1", degree=3, json=str(path), stdout=out)
            data = json.loads(path.read_text())

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.STATUS_PASSED)
        self.assertEqual(run.exit_code, 0)
        self.assertEqual(run.model_descriptor, "gaussian:1")
        self.assertEqual(run.config["degree"], 3)
        self.assertTrue(CheckRecord.objects.filter(run=run, name="closed_form_spectrum", passed=True).exists())
        self.assertEqual(data["command"], "spectrum")
        self.assertTrue(data["passed"])
        self.assertIn("all", out.getvalue())

    def test_bad_model_is_a_usage_error(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("spectrum", model="sphere:2", stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_torus_is_refused_by_spectrum(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("spectrum", model="torus:2", stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.STATUS_ERROR)
        self.assertEqual(run.exit_code, 2)

    def test_failed_check_exits_one(self):
        with mock.patch("core.management.suite.run", side_effect=_failing_report):
            with self.assertRaises(CommandError) as ctx:
                call_command("growth", model="gaussian:2", stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.STATUS_FAILED)
        self.assertEqual(run.checks.get().passed, False)

    def test_internal_error_exits_three(self):
        with mock.patch("core.management.suite.run", side_effect=RuntimeError("boom")):
            with self.assertRaises(CommandError) as ctx:
                call_command("variation", stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.STATUS_ERROR)

    def test_config_file_and_flags_merge(self):
        seen = {}

        def capture(config):
            seen.update(config)
            report = Report(config["command"], config)
            report.add(Check.info("noted", "recorded only", 0.0))
            return report

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.cfg"
            path.write_text("model = gaussian:3\ndegree = 5\n")
            with mock.patch("core.management.suite.run", side_effect=capture):
                call_command("spectrum", config=str(path), degree=2, stdout=StringIO())
        self.assertEqual(seen["model"], "gaussian:3")
        self.assertEqual(seen["degree"], 2)
        self.assertEqual(seen["command"], "spectrum")


class SuiteRunTests(TestCase):
    def _run(self, command, **options):
        try:
            call_command(command, stdout=StringIO(), **options)
        except CommandError as exc:
            self.assertEqual(exc.returncode, 1)
        run = ExperimentRun.objects.get(command=command)
        self.assertIn(run.status, (ExperimentRun.STATUS_PASSED, ExperimentRun.STATUS_FAILED))
        return run

    def assertChecksPass(self, run, *names):
        for name in names:
            self.assertTrue(CheckRecord.objects.filter(run=run, name=name, passed=True).exists(), name)

    def test_identities_on_a_torus(self):
        run = self._run("identities", model="torus:2", identity="ricci_identity", points=2)
        self.assertChecksPass(run, "ricci_identity.analytic")

    def test_variation_on_the_cylinder(self):
        run = self._run("variation", model="cylinder:2,3")
        self.assertChecksPass(run, "background", "second.spot_origin", "nonintegrability", "decomposition")

    def test_growth_of_killing_fields(self):
        run = self._run("growth", model="gaussian:2", degree=2, samples=2)
        self.assertChecksPass(run, "killing.d1", "killing.rot12")

    def test_gauge_fix_round_trip(self):
        run = self._run("gauge_fix", model="gaussian:2", grid_points=41, half_width=10.0, iters=2)
        self.assertChecksPass(run, "round_trip")
        self.assertGreater(run.checks.count(), 1)


class GaugeFixCommandTests(SimpleTestCase):
    def test_command_is_registered_with_an_underscore(self):
        commands = get_commands()
        self.assertEqual(commands["gauge_fix"], "core")
        self.assertNotIn("gauge-fix", commands)

    def test_help_names_the_command(self):
        command = load_command_class("core", "gauge_fix")
        self.assertIn("gauge_fix", command.help)


class ExportChecksCsvTests(TestCase):
    def setUp(self):
        run = ExperimentRun.objects.create(command="spectrum", model_descriptor="gaussian:1", seed=7)
        CheckRecord.objects.create(run=run, name="symmetry", claim="the matrix is symmetric", measured=0.0,
                                   target=0.0, tolerance=1e-8, passed=True)
        other = ExperimentRun.objects.create(command="growth", model_descriptor="gaussian:2", seed=7)
        CheckRecord.objects.create(run=other, name="slope.d1", claim="slope", measured=0.1, kind="info")

    def test_exports_all_rows(self):
        out = StringIO()
        call_command("export_checks_csv", stdout=out)
        lines = out.getvalue().strip().splitlines()
        self.assertTrue(lines[0].startswith("Run,Command,Model,Seed,Check"))
        self.assertEqual(len(lines), 3)

    def test_filters_by_command(self):
        out = StringIO()
        call_command("export_checks_csv", command="growth", stdout=out)
        lines = out.getvalue().strip().splitlines()
        self.assertEqual(len(lines), 2)
        self.assertIn("slope.d1", lines[1])

    def test_bad_date(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("export_checks_csv", start="18/10/2026", stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
