import csv
from datetime import datetime

from django.core.management.base import BaseCommand, CommandError

from core.models import CheckRecord


class Command(BaseCommand):
    help = "Export stored check records to CSV (stdout)."

    def add_arguments(self, parser):
        parser.add_argument(
            "--start",
            type=str,
            help="Start date (YYYY-MM-DD)",
        )
        parser.add_argument(
            "--end",
            type=str,
            help="End date (YYYY-MM-DD)",
        )
        parser.add_argument(
            "--command",
            type=str,
            help="Only runs of this command",
        )

    def handle(self, *args, **options):
        qs = CheckRecord.objects.all().select_related("run").order_by("run_id", "id")

        try:
            if options.get("start"):
                start = datetime.strptime(options["start"], "%Y-%m-%d")
                qs = qs.filter(run__created_at__date__gte=start.date())
            if options.get("end"):
                end = datetime.strptime(options["end"], "%Y-%m-%d")
                qs = qs.filter(run__created_at__date__lte=end.date())
        except ValueError as exc:
            raise CommandError(f"Dates are written YYYY-MM-DD: {exc}", returncode=2) from exc
        if options.get("command"):
            qs = qs.filter(run__command=options["command"])

        writer = csv.writer(self.stdout)
        writer.writerow(
            [
                "Run",
                "Command",
                "Model",
                "Seed",
                "Check",
                "Kind",
                "Measured",
                "Target",
                "Tolerance",
                "Passed",
                "Claim",
            ]
        )
        for c in qs:
            writer.writerow(
                [
                    c.run_id,
                    c.run.command,
                    c.run.model_descriptor,
                    c.run.seed,
                    c.name,
                    c.kind,
                    c.measured,
                    c.target,
                    c.tolerance,
                    c.passed,
                    c.claim,
                ]
            )
