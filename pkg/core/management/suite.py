"""Shared plumbing for the suite commands: config merge, validation, persistence, exit codes."""
from __future__ import annotations

import logging

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from django.db import transaction

from core.conf import option
from core.forms import ExperimentConfigForm
from core.models import CheckRecord, ExperimentRun
from core.reports import EXIT_FAILED, EXIT_INTERNAL, EXIT_USAGE, Report, read_config, run

logger = logging.getLogger(__name__)

COMMON_OPTIONS = ("config", "model", "seed", "json", "emit_csv")


class SuiteCommand(BaseCommand):
    """Base class; subclasses set ``suite`` and declare their own flags in ``suite_options``."""

    suite: str = ""
    suite_options: tuple[str, ...] = ()

    def add_arguments(self, parser):
        parser.add_argument("--config", type=str, help="key = value configuration file")
        parser.add_argument("--model", type=str, help="gaussian:n, cylinder:l,n or torus:n")
        parser.add_argument("--seed", type=int, help="Seed recorded in the report")
        parser.add_argument("--json", type=str, help="Write the JSON report here")
        parser.add_argument("--emit-csv", dest="emit_csv", type=str, help="Write CSV series here")
        self.add_suite_arguments(parser)

    def add_suite_arguments(self, parser):
        pass

    # -- configuration ------------------------------------------------------

    def collect(self, options) -> dict:
        data = read_config(options["config"]) if options.get("config") else {}
        data["command"] = self.suite
        for name in COMMON_OPTIONS + self.suite_options:
            if name != "config" and options.get(name) is not None:
                data[name] = options[name]
        form = ExperimentConfigForm(data)
        if not form.is_valid():
            messages = "; ".join(f"{key}: {' '.join(errors)}" for key, errors in form.errors.items())
            raise ValidationError(messages)
        return form.config()

    # -- execution ----------------------------------------------------------

    def handle(self, *args, **options):
        try:
            config = self.collect(options)
        except ValidationError as exc:
            raise CommandError(f"Invalid configuration: {' '.join(exc.messages)}", returncode=EXIT_USAGE) from exc

        record = ExperimentRun.objects.create(
            command=self.suite,
            model_descriptor=config.get("model", ""),
            seed=int(option("seed", config.get("seed"))),
            config=config,
            report_path=config.get("json", ""),
        )
        try:
            report = run(config)
        except ValidationError as exc:
            self._close(record, ExperimentRun.STATUS_ERROR, EXIT_USAGE)
            raise CommandError(f"Invalid configuration: {' '.join(exc.messages)}", returncode=EXIT_USAGE) from exc
        except Exception as exc:
            logger.exception("suite %s failed", self.suite)
            self._close(record, ExperimentRun.STATUS_ERROR, EXIT_INTERNAL)
            raise CommandError(f"{self.suite} failed: {exc}", returncode=EXIT_INTERNAL) from exc

        self.emit(report, config)
        self.persist(record, report)
        self.summarize(report)
        if not report.passed:
            names = ", ".join(check.name for check in report.failures)
            raise CommandError(f"{len(report.failures)} check(s) failed: {names}", returncode=EXIT_FAILED)

    def emit(self, report: Report, config: dict) -> None:
        if config.get("json"):
            report.write_json(config["json"])
        if config.get("emit_csv"):
            report.write_csv(config["emit_csv"])

    @transaction.atomic
    def persist(self, record: ExperimentRun, report: Report) -> None:
        CheckRecord.objects.bulk_create(
            [
                CheckRecord(
                    run=record,
                    name=check.name,
                    claim=check.claim,
                    measured=check.measured if check.measured == check.measured else None,
                    target=check.target,
                    tolerance=check.tolerance,
                    kind=check.kind,
                    passed=check.passed,
                )
                for check in report.checks
            ]
        )
        status = ExperimentRun.STATUS_PASSED if report.passed else ExperimentRun.STATUS_FAILED
        self._close(record, status, report.exit_code, report.timing.get("total_seconds"))

    def _close(self, record: ExperimentRun, status: str, exit_code: int, seconds: float | None = None) -> None:
        record.status = status
        record.exit_code = exit_code
        record.seconds = seconds
        record.save(update_fields=["status", "exit_code", "seconds", "updated_at"])

    def summarize(self, report: Report) -> None:
        for check in report.checks:
            if check.kind != "pass":
                continue
            line = f"{check.name}: {check.measured:.3e} (target {check.target}, tol {check.tolerance})"
            self.stdout.write(self.style.SUCCESS(line) if check.passed else self.style.ERROR(line))
        if report.passed:
            self.stdout.write(self.style.SUCCESS(f"{report.command}: all {len(report.checks)} checks passed."))
        else:
            self.stdout.write(self.style.WARNING(f"{report.command}: {len(report.failures)} check(s) failed."))
